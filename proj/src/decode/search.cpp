#include "p5rec/decode/search.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include <nlohmann/json.hpp>

#include "p5rec/common.hpp"
#include "p5rec/data/corpus.hpp"

namespace p5rec::decode {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Score-descending, then lexicographic on tokens.
bool better(const Hypothesis& a, double sa, const Hypothesis& b, double sb) {
  if (sa != sb) return sa > sb;
  return a.tokens < b.tokens;
}

double ranking_score(const Hypothesis& h, double penalty) {
  if (penalty == 0.0 || h.tokens.empty()) return h.score;
  return h.score / std::pow(static_cast<double>(h.tokens.size()), penalty);
}

void sort_hypotheses(std::vector<Hypothesis>& hs, double penalty) {
  std::sort(hs.begin(), hs.end(), [penalty](const Hypothesis& a, const Hypothesis& b) {
    return better(a, ranking_score(a, penalty), b, ranking_score(b, penalty));
  });
}

}  // namespace

LogProbFn model_scorer(const model::Seq2SeqModel& model, const model::EncoderOutput& memory) {
  return [&model, &memory](std::span<const int> generated) {
    std::vector<int> prefix;
    prefix.reserve(generated.size() + 1);
    prefix.push_back(model::Seq2SeqModel::kDecoderStart);
    prefix.insert(prefix.end(), generated.begin(), generated.end());
    RowVector logits = model.next_logits(prefix, memory);
    return RowVector(model::log_softmax_rows(logits).row(0));
  };
}

std::vector<int> greedy_decode(const LogProbFn& scorer, int vocab_size, int max_len) {
  std::vector<int> out;
  while (static_cast<int>(out.size()) < max_len) {
    const RowVector lp = scorer(out);
    int best = -1;
    for (int t = 0; t < vocab_size; ++t) {
      if (t == text::kPadId) continue;
      if (best < 0 || lp[t] > lp[best]) best = t;
    }
    out.push_back(best);
    if (best == text::kEosId) break;
  }
  return out;
}

std::vector<int> greedy_decode(const model::Seq2SeqModel& model, const text::EncodedSequence& input, int max_len) {
  if (max_len <= 0) return {};
  const auto memory = model.encode(input);
  return greedy_decode(model_scorer(model, memory), model.config().vocab_size, max_len);
}

std::string greedy_decode_text(const model::Seq2SeqModel& model, const text::EncodedSequence& input,
                               const text::Vocab& vocab, int max_len) {
  const auto tokens = greedy_decode(model, input, max_len);
  return text::decode(tokens, vocab);
}

double sequence_log_prob(const LogProbFn& scorer, std::span<const int> tokens) {
  double total = 0.0;
  for (std::size_t i = 0; i < tokens.size(); ++i) total += scorer(tokens.first(i))[tokens[i]];
  return total;
}

ItemTrie::ItemTrie() : nodes_(1) {}

void ItemTrie::insert(std::vector<int> tokens, const std::string& item_id) {
  if (tokens.empty() || tokens.back() != text::kEosId) {
    throw EvalError("trie entry for item " + item_id + " must end with end-of-sequence");
  }
  std::size_t node = 0;
  for (int t : tokens) {
    auto it = nodes_[node].children.find(t);
    if (it == nodes_[node].children.end()) {
      nodes_.emplace_back();
      it = nodes_[node].children.emplace(t, nodes_.size() - 1).first;
    }
    node = it->second;
  }
  if (nodes_[node].item) {
    if (*nodes_[node].item == item_id) return;
    throw EvalError("items " + *nodes_[node].item + " and " + item_id + " tokenize identically");
  }
  nodes_[node].item = item_id;
  ++items_;
}

const ItemTrie::Node* ItemTrie::walk(std::span<const int> prefix) const {
  std::size_t node = 0;
  for (int t : prefix) {
    auto it = nodes_[node].children.find(t);
    if (it == nodes_[node].children.end()) return nullptr;
    node = it->second;
  }
  return &nodes_[node];
}

std::vector<int> ItemTrie::allowed(std::span<const int> prefix) const {
  std::vector<int> out;
  if (const auto* n = walk(prefix)) {
    for (const auto& [t, _] : n->children) out.push_back(t);
  }
  return out;
}

std::optional<std::string> ItemTrie::lookup(std::span<const int> tokens) const {
  const auto* n = walk(tokens);
  return n ? n->item : std::nullopt;
}

ItemTrie build_item_trie(const std::vector<std::string>& item_ids, const text::Vocab& vocab, int max_len) {
  ItemTrie trie;
  for (const auto& id : item_ids) {
    auto seq = text::encode(data::item_token(id), vocab, max_len + 1);
    if (static_cast<int>(seq.token_ids.size()) > max_len) {
      throw EvalError("item " + id + " needs more than " + std::to_string(max_len) + " decoder tokens");
    }
    trie.insert(std::move(seq.token_ids), id);
  }
  return trie;
}

BeamResult beam_search(const LogProbFn& scorer, int vocab_size, const BeamOptions& options, const ItemTrie* trie) {
  if (options.beam < 1) throw EvalError("beam size must be at least 1");
  if (trie && trie->empty()) throw EvalError("constrained beam search needs a non-empty trie");
  const auto B = static_cast<std::size_t>(options.beam);

  std::vector<Hypothesis> alive{Hypothesis{}};
  std::vector<Hypothesis> finished;
  for (int step = 0; step < options.max_len && !alive.empty(); ++step) {
    std::vector<Hypothesis> expansions;
    for (const auto& h : alive) {
      const RowVector lp = scorer(h.tokens);
      auto extend = [&](int t) {
        if (lp[t] == kNegInf) return;
        Hypothesis e{h.tokens, h.score + lp[t], t == text::kEosId};
        e.tokens.push_back(t);
        expansions.push_back(std::move(e));
      };
      if (trie) {
        for (int t : trie->allowed(h.tokens)) extend(t);
      } else {
        for (int t = 0; t < vocab_size; ++t) {
          if (t != text::kPadId) extend(t);
        }
      }
    }
    const auto keep = std::min(B, expansions.size());
    std::partial_sort(expansions.begin(), expansions.begin() + static_cast<std::ptrdiff_t>(keep), expansions.end(),
                      [](const Hypothesis& a, const Hypothesis& b) { return better(a, a.score, b, b.score); });
    alive.clear();
    for (std::size_t i = 0; i < keep; ++i) {
      (expansions[i].finished ? finished : alive).push_back(std::move(expansions[i]));
    }
    // Scores only decrease with length, so once B finished hypotheses beat
    // every live one no live extension can enter the top B.
    if (options.length_penalty == 0.0 && finished.size() >= B && !alive.empty()) {
      sort_hypotheses(finished, 0.0);
      finished.resize(B);
      if (finished.back().score > alive.front().score) alive.clear();
    }
  }

  BeamResult result;
  if (finished.empty()) {
    result.unfinished = true;
    result.hypotheses = std::move(alive);
  } else {
    result.hypotheses = std::move(finished);
  }
  sort_hypotheses(result.hypotheses, options.length_penalty);
  if (result.hypotheses.size() > B) result.hypotheses.resize(B);
  return result;
}

BeamResult beam_search(const model::Seq2SeqModel& model, const text::EncodedSequence& input,
                       const BeamOptions& options, const ItemTrie* trie) {
  if (options.max_len <= 0) return {};
  const auto memory = model.encode(input);
  return beam_search(model_scorer(model, memory), model.config().vocab_size, options, trie);
}

std::vector<RankedItem> constrained_beam(const model::Seq2SeqModel& model, const text::EncodedSequence& input,
                                         const ItemTrie& trie, const BeamOptions& options) {
  const auto result = beam_search(model, input, options, &trie);
  std::vector<RankedItem> out;
  for (const auto& h : result.hypotheses) {
    if (!h.finished) continue;
    out.push_back({*trie.lookup(h.tokens), h.score});
  }
  return out;
}

void write_decode_records(std::ostream& out, const std::vector<DecodeRecord>& records) {
  for (const auto& r : records) {
    out << nlohmann::json{{"query", r.query_id}, {"rank", r.rank}, {"output", r.output}, {"score", r.score}}.dump()
        << "\n";
  }
}

}  // namespace p5rec::decode
