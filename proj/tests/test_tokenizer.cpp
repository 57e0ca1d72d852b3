#include <filesystem>
#include <random>

#include "doctest.h"
#include "p5rec/common.hpp"
#include "p5rec/text/tokenizer.hpp"

using namespace p5rec;
using namespace p5rec::text;

namespace {

int byte_tok(char c) { return kByteOffset + static_cast<unsigned char>(c); }

std::string collapse_spaces(const std::string& s) {
  std::string out;
  for (const auto& w : split_whitespace(s)) out += (out.empty() ? "" : " ") + w;
  return out;
}

}  // namespace

TEST_CASE("byte-level vocabulary layout") {
  const auto v = Vocab::byte_level();
  CHECK(v.size() == kBaseVocabSize);
  CHECK(v.find(std::string(1, 'a')) == byte_tok('a'));
  CHECK(v.token(kPadId) != v.token(kEosId));
  CHECK(v.token(kEosId) != v.token(kUnkId));
}

TEST_CASE("merge table matches a hand computation") {
  // words: "ab" x3, "abc" x1, each prefixed by the word-start space.
  // pair counts: (' ','a')=4, ('a','b')=4, ('b','c')=1; the tie goes to the
  // lexicographically smaller left token ' ', giving " a", then " ab" (4),
  // after which (" ab",'c') occurs once and training stops.
  const auto v = train_subword_vocab({"ab ab ab", "abc"}, 400);
  REQUIRE(v.merges().size() == 2);
  CHECK(v.token(v.merges()[0].result) == " a");
  CHECK(v.token(v.merges()[1].result) == " ab");
  CHECK(v.size() == kBaseVocabSize + 2);
  const auto seq = encode("abc ab", v, 16);
  const std::vector<int> expected = {kBaseVocabSize + 1, byte_tok('c'), kBaseVocabSize + 1, kEosId};
  CHECK(seq.token_ids == expected);
  CHECK(seq.whole_word_ids == std::vector<int>{1, 1, 2, 0});
}

TEST_CASE("training respects the target size and validates inputs") {
  const auto v = train_subword_vocab({"the cat sat on the mat the cat"}, kBaseVocabSize + 3);
  CHECK(v.size() == kBaseVocabSize + 3);
  CHECK_THROWS_AS(train_subword_vocab({}, 300), TokenizerError);
  CHECK_THROWS_AS(train_subword_vocab({"x"}, 100), TokenizerError);
}

TEST_CASE("decode inverts encode up to whitespace for arbitrary bytes") {
  const auto v = train_subword_vocab({"hello world hello there world of words"}, 300);
  Rng rng(5);
  for (int trial = 0; trial < 300; ++trial) {
    std::string s;
    const int n = static_cast<int>(rng() % 30);
    for (int i = 0; i < n; ++i) {
      const int r = static_cast<int>(rng() % 10);
      s += r < 2 ? ' ' : r < 3 ? static_cast<char>(0x80 + rng() % 0x40) : static_cast<char>('a' + rng() % 26);
    }
    const auto seq = encode(s, v, 1000);
    CHECK(seq.token_ids.back() == kEosId);
    CHECK(decode(seq.token_ids, v) == collapse_spaces(s));
  }
}

TEST_CASE("truncation keeps the end marker") {
  const auto v = Vocab::byte_level();
  const auto seq = encode("abcdef ghij", v, 4);
  CHECK(seq.size() == 4);
  CHECK(seq.token_ids.back() == kEosId);
  CHECK(seq.whole_word_ids.back() == kSpecialWordId);
  CHECK_THROWS_AS(encode("x", v, 0), TokenizerError);
  CHECK(encode("", v, 4).token_ids == std::vector<int>{kEosId});
}

TEST_CASE("whole-word ids start at one and step at word boundaries") {
  const auto v = Vocab::byte_level();
  const auto seq = encode("What star rating do you think briana will give item_7391?", v, 512);
  CHECK(seq.whole_word_ids.front() == 1);
  int word = 0;
  std::size_t item_tokens = 0;
  for (std::size_t i = 0; i + 1 < seq.size(); ++i) {
    const int w = seq.whole_word_ids[i];
    CHECK((w == word || w == word + 1));
    word = w;
    if (w == 10) ++item_tokens;
  }
  CHECK(word == 10);
  CHECK(item_tokens == std::string(" item_7391?").size());
}

TEST_CASE("decode rejects unknown ids and skips specials") {
  const auto v = Vocab::byte_level();
  CHECK_THROWS_AS(decode(std::vector<int>{v.size()}, v), TokenizerError);
  CHECK(decode(std::vector<int>{kPadId, byte_tok(' '), byte_tok('a'), kEosId}, v) == "a");
}

TEST_CASE("vocab serialization round-trips and hashes stably") {
  auto v = train_subword_vocab({"alpha beta gamma alpha beta alpha"}, 280);
  v = extend_with_atomic_ids(v, {"1", "2"}, {"10"});
  const auto text = v.serialize();
  const auto back = Vocab::parse(text);
  CHECK(back == v);
  CHECK(back.hash() == v.hash());
  const auto path = std::filesystem::temp_directory_path() / "p5rec_vocab_test.txt";
  v.save(path);
  CHECK(Vocab::load(path) == v);
  std::filesystem::remove(path);
  CHECK(train_subword_vocab({"alpha beta"}, 270).hash() != v.hash());
  CHECK_THROWS_AS(Vocab::parse("not a vocab"), TokenizerError);
}

TEST_CASE("atomic ids give one token per user and item") {
  const auto base = train_subword_vocab({"item_1 item_2 user_1 item_7391"}, 300);
  const std::vector<std::string> users = {"1", "2", "3"};
  const std::vector<std::string> items = {"1", "2", "7391"};
  const auto v = extend_with_atomic_ids(base, users, items);
  CHECK(v.size() == base.size() + static_cast<int>(users.size() + items.size()));

  const auto one = encode("item_7391", v, 16);
  REQUIRE(one.size() == 2);
  CHECK(v.is_atomic(one.token_ids[0]));
  CHECK(one.whole_word_ids == std::vector<int>{1, 0});

  const auto punct = encode("user_2 likes item_1,", v, 32);
  const auto last_word = punct.whole_word_ids[punct.size() - 2];
  CHECK(v.is_atomic(punct.token_ids[0]));
  CHECK(punct.token_ids[punct.size() - 2] == byte_tok(','));
  CHECK(punct.whole_word_ids[punct.size() - 3] == last_word);
  CHECK(decode(punct.token_ids, v) == "user_2 likes item_1,");

  CHECK_THROWS_AS(encode("item_555", v, 16), TokenizerError);
  // without the id characters the prefix is plain text
  CHECK_NOTHROW(encode("item_ stays", v, 16));
}
