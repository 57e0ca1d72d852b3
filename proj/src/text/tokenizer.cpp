#include "p5rec/text/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "p5rec/common.hpp"

namespace p5rec::text {

namespace {

constexpr std::string_view kVocabFormat = "p5rec-vocab/1";
constexpr char kWordStart = ' ';

std::string hex_encode(std::string_view bytes) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (unsigned char c : bytes) {
    out += digits[c >> 4];
    out += digits[c & 15];
  }
  return out;
}

std::string hex_decode(std::string_view hex) {
  if (hex.size() % 2 != 0) throw TokenizerError("odd-length hex token in vocab file");
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    throw TokenizerError("bad hex digit in vocab file");
  };
  std::string out;
  for (std::size_t i = 0; i < hex.size(); i += 2) {
    out += static_cast<char>(nibble(hex[i]) * 16 + nibble(hex[i + 1]));
  }
  return out;
}

int byte_id(unsigned char c) { return kByteOffset + c; }

/// Applies merges in rank order until no adjacent pair is mergeable.
void apply_merges(std::vector<int>& symbols, const Vocab& vocab) {
  while (symbols.size() > 1) {
    int best_rank = -1;
    for (std::size_t i = 0; i + 1 < symbols.size(); ++i) {
      if (auto r = vocab.merge_rank(symbols[i], symbols[i + 1]); r && (best_rank < 0 || *r < best_rank)) {
        best_rank = *r;
      }
    }
    if (best_rank < 0) break;
    const auto& m = vocab.merges()[static_cast<std::size_t>(best_rank)];
    std::vector<int> next;
    next.reserve(symbols.size());
    for (std::size_t i = 0; i < symbols.size(); ++i) {
      if (i + 1 < symbols.size() && symbols[i] == m.left && symbols[i + 1] == m.right) {
        next.push_back(m.result);
        ++i;
      } else {
        next.push_back(symbols[i]);
      }
    }
    symbols = std::move(next);
  }
}

std::vector<int> bpe_bytes(std::string_view bytes, bool word_start, const Vocab& vocab) {
  std::vector<int> symbols;
  symbols.reserve(bytes.size() + 1);
  if (word_start) symbols.push_back(byte_id(static_cast<unsigned char>(kWordStart)));
  for (unsigned char c : bytes) symbols.push_back(byte_id(c));
  apply_merges(symbols, vocab);
  return symbols;
}

bool is_id_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

}  // namespace

std::vector<std::string> split_whitespace(std::string_view text) {
  std::vector<std::string> words;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t start = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i > start) words.emplace_back(text.substr(start, i - start));
  }
  return words;
}

// --- Vocab ----------------------------------------------------------------

Vocab Vocab::byte_level() {
  Vocab v;
  v.add_token("<pad>");
  v.add_token("</s>");
  v.add_token("<unk>");
  for (int b = 0; b < 256; ++b) v.add_token(std::string(1, static_cast<char>(b)));
  return v;
}

int Vocab::add_token(std::string token) {
  if (index_.count(token)) throw TokenizerError("token collision: '" + token + "' already in vocab");
  int id = size();
  index_.emplace(token, id);
  tokens_.push_back(std::move(token));
  return id;
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || id >= size()) throw TokenizerError("token id " + std::to_string(id) + " out of range");
  return tokens_[static_cast<std::size_t>(id)];
}

std::optional<int> Vocab::find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::optional<int> Vocab::merge_rank(int left, int right) const {
  auto it = merge_rank_.find({left, right});
  if (it == merge_rank_.end()) return std::nullopt;
  return it->second;
}

int Vocab::add_merge(int left, int right) {
  if (merge_rank_.count({left, right})) throw TokenizerError("duplicate merge");
  int result = add_token(token(left) + token(right));
  merge_rank_.emplace(std::make_pair(left, right), static_cast<int>(merges_.size()));
  merges_.push_back({left, right, result});
  return result;
}

int Vocab::add_atomic(std::string_view word, std::string_view prefix) {
  if (atomic_.count(std::string(word))) throw TokenizerError("atomic id '" + std::string(word) + "' added twice");
  int id = add_token("<" + std::string(word) + ">");
  atomic_.emplace(word, id);
  atomic_words_.emplace(id, word);
  if (std::find(atomic_prefixes_.begin(), atomic_prefixes_.end(), prefix) == atomic_prefixes_.end()) {
    atomic_prefixes_.emplace_back(prefix);
  }
  return id;
}

std::optional<int> Vocab::atomic_id(std::string_view word) const {
  auto it = atomic_.find(std::string(word));
  if (it == atomic_.end()) return std::nullopt;
  return it->second;
}

std::string Vocab::serialize() const {
  std::ostringstream out;
  out << kVocabFormat << "\n";
  out << "specials pad=" << kPadId << " eos=" << kEosId << " unk=" << kUnkId << "\n";
  out << "tokens " << tokens_.size() << "\n";
  for (const auto& t : tokens_) out << hex_encode(t) << "\n";
  out << "merges " << merges_.size() << "\n";
  for (const auto& m : merges_) out << m.left << " " << m.right << " " << m.result << "\n";
  out << "atomic " << atomic_words_.size() << "\n";
  for (const auto& [id, word] : atomic_words_) out << id << " " << word << "\n";
  out << "prefixes " << atomic_prefixes_.size() << "\n";
  for (const auto& p : atomic_prefixes_) out << p << "\n";
  return out.str();
}

Vocab Vocab::parse(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  auto expect_header = [&](const std::string& key) -> std::size_t {
    std::string k;
    std::size_t n = 0;
    if (!(in >> k >> n) || k != key) throw TokenizerError("vocab file: expected '" + key + "' section");
    return n;
  };
  if (!std::getline(in, line) || line != kVocabFormat) throw TokenizerError("vocab file: bad format tag");
  if (!std::getline(in, line) || line.rfind("specials ", 0) != 0) throw TokenizerError("vocab file: missing specials");
  Vocab v;
  std::size_t n = expect_header("tokens");
  std::vector<std::string> tokens;
  for (std::size_t i = 0; i < n; ++i) {
    std::string hex;
    in >> hex;
    tokens.push_back(hex_decode(hex));
  }
  for (auto& t : tokens) v.add_token(std::move(t));
  std::size_t m = expect_header("merges");
  for (std::size_t i = 0; i < m; ++i) {
    Merge mg{};
    if (!(in >> mg.left >> mg.right >> mg.result)) throw TokenizerError("vocab file: truncated merges");
    if (v.token(mg.result) != v.token(mg.left) + v.token(mg.right)) {
      throw TokenizerError("vocab file: merge result does not match its parts");
    }
    v.merge_rank_.emplace(std::make_pair(mg.left, mg.right), static_cast<int>(v.merges_.size()));
    v.merges_.push_back(mg);
  }
  std::size_t a = expect_header("atomic");
  for (std::size_t i = 0; i < a; ++i) {
    int id = 0;
    std::string word;
    if (!(in >> id >> word)) throw TokenizerError("vocab file: truncated atomic section");
    v.atomic_.emplace(word, id);
    v.atomic_words_.emplace(id, word);
  }
  std::size_t p = expect_header("prefixes");
  for (std::size_t i = 0; i < p; ++i) {
    std::string prefix;
    in >> prefix;
    v.atomic_prefixes_.push_back(prefix);
  }
  return v;
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw TokenizerError("cannot write vocab file " + path.string());
  out << serialize();
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw TokenizerError("cannot open vocab file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::uint64_t Vocab::hash() const { return fnv1a(serialize()); }

// --- training -------------------------------------------------------------

Vocab train_subword_vocab(const std::vector<std::string>& corpus, int target_size,
                          const WordSplitter& splitter) {
  if (corpus.empty()) throw TokenizerError("cannot train a vocabulary on an empty corpus");
  if (target_size < kBaseVocabSize) {
    throw TokenizerError("target vocab size " + std::to_string(target_size) + " is below the base alphabet size " +
                         std::to_string(kBaseVocabSize));
  }
  Vocab vocab = Vocab::byte_level();

  std::map<std::string, long> word_counts;
  for (const auto& doc : corpus) {
    for (auto& w : splitter(doc)) ++word_counts[std::move(w)];
  }
  std::vector<std::vector<int>> words;
  std::vector<long> counts;
  for (const auto& [w, c] : word_counts) {
    std::vector<int> symbols{byte_id(static_cast<unsigned char>(kWordStart))};
    for (unsigned char ch : w) symbols.push_back(byte_id(ch));
    words.push_back(std::move(symbols));
    counts.push_back(c);
  }

  std::unordered_map<std::uint64_t, long> pair_counts;
  auto key = [](int a, int b) { return (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint32_t>(b); };
  while (vocab.size() < target_size) {
    pair_counts.clear();
    for (std::size_t w = 0; w < words.size(); ++w) {
      const auto& s = words[w];
      for (std::size_t i = 0; i + 1 < s.size(); ++i) pair_counts[key(s[i], s[i + 1])] += counts[w];
    }
    long best_count = 0;
    int best_left = -1;
    int best_right = -1;
    for (const auto& [k, c] : pair_counts) {
      int l = static_cast<int>(k >> 32);
      int r = static_cast<int>(k & 0xffffffffU);
      bool better = c > best_count;
      if (!better && c == best_count && best_left >= 0) {
        const auto& bl = vocab.token(best_left);
        const auto& cl = vocab.token(l);
        better = cl < bl || (cl == bl && vocab.token(r) < vocab.token(best_right));
      }
      if (better) {
        best_count = c;
        best_left = l;
        best_right = r;
      }
    }
    if (best_count < 2) break;
    int merged = vocab.add_merge(best_left, best_right);
    for (auto& s : words) {
      std::vector<int> next;
      next.reserve(s.size());
      for (std::size_t i = 0; i < s.size(); ++i) {
        if (i + 1 < s.size() && s[i] == best_left && s[i + 1] == best_right) {
          next.push_back(merged);
          ++i;
        } else {
          next.push_back(s[i]);
        }
      }
      s = std::move(next);
    }
  }
  return vocab;
}

// --- encode / decode ------------------------------------------------------

std::vector<int> encode_word(std::string_view word, const Vocab& vocab) {
  if (vocab.has_atomic()) {
    for (const auto& prefix : vocab.atomic_prefixes()) {
      if (word.size() <= prefix.size() || word.substr(0, prefix.size()) != prefix) continue;
      std::size_t end = prefix.size();
      while (end < word.size() && is_id_char(word[end])) ++end;
      if (end == prefix.size()) continue;
      auto key = word.substr(0, end);
      auto id = vocab.atomic_id(key);
      if (!id) {
        throw TokenizerError("'" + std::string(key) + "' has no atomic token; atomic vocabularies cannot cover new ids");
      }
      std::vector<int> out{*id};
      if (end < word.size()) {
        auto rest = bpe_bytes(word.substr(end), false, vocab);
        out.insert(out.end(), rest.begin(), rest.end());
      }
      return out;
    }
  }
  return bpe_bytes(word, true, vocab);
}

EncodedSequence encode(std::string_view text, const Vocab& vocab, int max_len, const WordSplitter& splitter) {
  if (max_len < 1) throw TokenizerError("max_len must be at least 1");
  EncodedSequence seq;
  const auto budget = static_cast<std::size_t>(max_len - 1);
  int word_index = 0;
  for (const auto& w : splitter(text)) {
    if (seq.token_ids.size() >= budget) break;
    ++word_index;
    for (int id : encode_word(w, vocab)) {
      if (seq.token_ids.size() >= budget) break;
      seq.token_ids.push_back(id);
      seq.whole_word_ids.push_back(word_index);
    }
  }
  seq.token_ids.push_back(kEosId);
  seq.whole_word_ids.push_back(kSpecialWordId);
  return seq;
}

std::string decode(std::span<const int> ids, const Vocab& vocab) {
  std::string out;
  for (int id : ids) {
    if (id < 0 || id >= vocab.size()) throw TokenizerError("cannot decode unknown token id " + std::to_string(id));
    if (id == kPadId || id == kEosId) continue;
    if (vocab.is_atomic(id)) {
      out += kWordStart;
      out += vocab.atomic_word(id);
    } else {
      out += vocab.token(id);
    }
  }
  if (!out.empty() && out.front() == kWordStart) out.erase(0, 1);
  return out;
}

Vocab extend_with_atomic_ids(const Vocab& vocab, const std::vector<std::string>& user_ids,
                             const std::vector<std::string>& item_ids) {
  Vocab out = vocab;
  for (const auto& u : user_ids) out.add_atomic("user_" + u, "user_");
  for (const auto& i : item_ids) out.add_atomic("item_" + i, "item_");
  return out;
}

}  // namespace p5rec::text
