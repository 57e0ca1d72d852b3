#pragma once

#include <span>
#include <string>
#include <vector>

namespace p5rec::eval {

double rmse(std::span<const double> preds, std::span<const double> targets);
double mae(std::span<const double> preds, std::span<const double> targets);

/// Ranked output of one query with its single ground-truth item.
struct RankedList {
  std::string query_id;
  std::vector<std::string> items;
  std::string ground_truth;
};

/// Fraction of queries whose ground truth is in the top k.
double hr_at_k(std::span<const RankedList> lists, int k);
/// Mean of 1/log2(rank + 1) over hits within k (ideal DCG is 1).
double ndcg_at_k(std::span<const RankedList> lists, int k);

/// 1-based rank of the ground truth, or 0 when absent.
int rank_of(const RankedList& list);

struct TextPair {
  std::string candidate;
  std::string reference;
};

/// Lowercase whitespace tokenization applied before BLEU and ROUGE.
std::vector<std::string> normalize_tokens(const std::string& text);

inline constexpr double kBleuSmoothing = 1e-9;
inline constexpr double kRougeBeta = 1.2;

/// Corpus BLEU-4 in [0, 1]: geometric mean of clipped 1-4 gram precisions
/// (zero counts replaced by kBleuSmoothing) times the brevity penalty.
double bleu4(std::span<const TextPair> pairs);
/// Mean per-pair ROUGE-N F-measure with beta = kRougeBeta.
double rouge_n(std::span<const TextPair> pairs, int n);
/// Mean per-pair ROUGE-L F-measure from the longest common subsequence.
double rouge_l(std::span<const TextPair> pairs);

}  // namespace p5rec::eval
