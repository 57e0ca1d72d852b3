#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace p5rec::text {

inline constexpr int kPadId = 0;
inline constexpr int kEosId = 1;
inline constexpr int kUnkId = 2;
inline constexpr int kByteOffset = 3;
inline constexpr int kBaseVocabSize = kByteOffset + 256;

/// Whole-word id carried by special tokens (end-of-sequence, padding).
inline constexpr int kSpecialWordId = 0;

/// Token ids plus the whole-word index of each token. Word indices start at
/// 1 and increase by one at every word boundary; special tokens carry 0.
struct EncodedSequence {
  std::vector<int> token_ids;
  std::vector<int> whole_word_ids;

  std::size_t size() const { return token_ids.size(); }
};

using WordSplitter = std::function<std::vector<std::string>(std::string_view)>;

/// Splits on ASCII whitespace; punctuation stays inside words.
std::vector<std::string> split_whitespace(std::string_view text);

class Vocab {
 public:
  /// Specials plus the 256 byte tokens; no merges.
  static Vocab byte_level();

  int size() const { return static_cast<int>(tokens_.size()); }
  const std::string& token(int id) const;
  std::optional<int> find(std::string_view token) const;

  struct Merge {
    int left;
    int right;
    int result;
  };
  const std::vector<Merge>& merges() const { return merges_; }
  /// Rank of merging (left, right), or nullopt.
  std::optional<int> merge_rank(int left, int right) const;

  /// Adds the token produced by merging two existing tokens.
  int add_merge(int left, int right);
  /// Adds a standalone token that the encoder emits for `word`.
  int add_atomic(std::string_view word, std::string_view prefix);

  bool has_atomic() const { return !atomic_.empty(); }
  std::optional<int> atomic_id(std::string_view word) const;
  const std::vector<std::string>& atomic_prefixes() const { return atomic_prefixes_; }
  bool is_atomic(int id) const { return atomic_words_.count(id) > 0; }
  const std::string& atomic_word(int id) const { return atomic_words_.at(id); }

  std::string serialize() const;
  static Vocab parse(std::string_view text);
  void save(const std::filesystem::path& path) const;
  static Vocab load(const std::filesystem::path& path);

  /// FNV-1a over the serialized form.
  std::uint64_t hash() const;

  friend bool operator==(const Vocab& a, const Vocab& b) { return a.serialize() == b.serialize(); }

 private:
  int add_token(std::string token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
  std::vector<Merge> merges_;
  std::map<std::pair<int, int>, int> merge_rank_;
  std::unordered_map<std::string, int> atomic_;
  std::map<int, std::string> atomic_words_;
  std::vector<std::string> atomic_prefixes_;
};

/// Byte-pair merge training: repeatedly fuses the most frequent adjacent
/// pair (ties broken by the lexicographic order of the two token strings)
/// until `target_size` is reached or no pair occurs twice.
Vocab train_subword_vocab(const std::vector<std::string>& corpus, int target_size,
                          const WordSplitter& splitter = split_whitespace);

/// Token ids for a single word, including the leading word-start marker.
std::vector<int> encode_word(std::string_view word, const Vocab& vocab);

/// Encodes `text` and appends end-of-sequence. Sequences longer than
/// `max_len` are truncated at the tail, keeping the trailing end marker.
EncodedSequence encode(std::string_view text, const Vocab& vocab, int max_len,
                       const WordSplitter& splitter = split_whitespace);

/// Inverse of encode up to whitespace normalisation. Padding and
/// end-of-sequence ids are skipped.
std::string decode(std::span<const int> ids, const Vocab& vocab);

/// Atomic-id mode: one token per user and item, matched against the words
/// `user_<id>` and `item_<id>`.
Vocab extend_with_atomic_ids(const Vocab& vocab, const std::vector<std::string>& user_ids,
                             const std::vector<std::string>& item_ids);

}  // namespace p5rec::text
