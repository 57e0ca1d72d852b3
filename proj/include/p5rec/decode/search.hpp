#pragma once

#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "p5rec/model/transformer.hpp"
#include "p5rec/text/tokenizer.hpp"

namespace p5rec::decode {

using model::RowVector;

/// Next-token log-probabilities given the tokens generated so far (decoder
/// start token not included).
using LogProbFn = std::function<RowVector(std::span<const int> generated)>;

/// Adapter over a model and one encoded input.
LogProbFn model_scorer(const model::Seq2SeqModel& model, const model::EncoderOutput& memory);

/// Greedy argmax decoding; ties go to the lowest id and padding is never
/// emitted. Stops after end-of-sequence (included in the result) or after
/// `max_len` tokens.
std::vector<int> greedy_decode(const LogProbFn& scorer, int vocab_size, int max_len);
std::vector<int> greedy_decode(const model::Seq2SeqModel& model, const text::EncodedSequence& input, int max_len);
std::string greedy_decode_text(const model::Seq2SeqModel& model, const text::EncodedSequence& input,
                               const text::Vocab& vocab, int max_len);

/// Sum of log-probabilities of `tokens` under the scorer.
double sequence_log_prob(const LogProbFn& scorer, std::span<const int> tokens);

/// Prefix tree over tokenized items. Each stored sequence ends with
/// end-of-sequence, so a terminal is never a strict prefix of another entry.
class ItemTrie {
 public:
  ItemTrie();

  /// `tokens` must end with end-of-sequence; throws EvalError otherwise or
  /// when the sequence is already stored under another item.
  void insert(std::vector<int> tokens, const std::string& item_id);
  /// Tokens allowed after `prefix`, ascending; empty when `prefix` leaves
  /// the trie or is complete.
  std::vector<int> allowed(std::span<const int> prefix) const;
  std::optional<std::string> lookup(std::span<const int> tokens) const;
  std::size_t size() const { return items_; }
  bool empty() const { return items_ == 0; }

 private:
  struct Node {
    std::map<int, std::size_t> children;
    std::optional<std::string> item;
  };
  const Node* walk(std::span<const int> prefix) const;

  std::vector<Node> nodes_;
  std::size_t items_ = 0;
};

/// Trie over the decoder targets "item_<id>" of the given items.
ItemTrie build_item_trie(const std::vector<std::string>& item_ids, const text::Vocab& vocab, int max_len);

struct BeamOptions {
  int beam = 20;
  int max_len = 32;
  /// Final ranking uses score / length^length_penalty; 0 disables it.
  double length_penalty = 0.0;
};

struct Hypothesis {
  std::vector<int> tokens;  // ends with end-of-sequence when finished
  double score = 0.0;       // summed token log-probabilities
  bool finished = false;
};

struct BeamResult {
  std::vector<Hypothesis> hypotheses;  // sorted by ranking score, best first
  /// True when nothing finished within max_len and the best unfinished
  /// hypotheses were returned instead.
  bool unfinished = false;
};

/// Length-synchronous beam search. Each step keeps the best `beam`
/// expansions of the live hypotheses; expansions ending in end-of-sequence
/// move to the finished pool. Ties are broken lexicographically by tokens.
/// With a trie, expansions are restricted to trie continuations.
BeamResult beam_search(const LogProbFn& scorer, int vocab_size, const BeamOptions& options,
                       const ItemTrie* trie = nullptr);
BeamResult beam_search(const model::Seq2SeqModel& model, const text::EncodedSequence& input,
                       const BeamOptions& options, const ItemTrie* trie = nullptr);

struct RankedItem {
  std::string item_id;
  double score = 0.0;
};

/// Beam search restricted to catalog items.
std::vector<RankedItem> constrained_beam(const model::Seq2SeqModel& model, const text::EncodedSequence& input,
                                         const ItemTrie& trie, const BeamOptions& options);

/// One line per (query, rank): {"query":..,"rank":..,"output":..,"score":..}.
struct DecodeRecord {
  std::string query_id;
  int rank = 0;
  std::string output;
  double score = 0.0;
};

void write_decode_records(std::ostream& out, const std::vector<DecodeRecord>& records);

}  // namespace p5rec::decode
