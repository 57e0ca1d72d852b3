#include "p5rec/eval/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "p5rec/common.hpp"

namespace p5rec::eval {

namespace {

void check_lengths(std::span<const double> preds, std::span<const double> targets) {
  if (preds.size() != targets.size()) {
    throw EvalError("prediction/target length mismatch: " + std::to_string(preds.size()) + " vs " +
                    std::to_string(targets.size()));
  }
  if (preds.empty()) throw EvalError("no predictions to score");
}

void check_lists(std::span<const RankedList> lists, int k) {
  if (k < 1) throw EvalError("k must be at least 1");
  if (lists.empty()) throw EvalError("no ranked lists to score");
}

using Ngrams = std::map<std::vector<std::string>, int>;

Ngrams ngrams(const std::vector<std::string>& tokens, int n) {
  Ngrams out;
  const auto un = static_cast<std::size_t>(n);
  for (std::size_t i = 0; i + un <= tokens.size(); ++i) {
    ++out[std::vector<std::string>(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                   tokens.begin() + static_cast<std::ptrdiff_t>(i + un))];
  }
  return out;
}

int overlap(const Ngrams& cand, const Ngrams& ref) {
  int total = 0;
  for (const auto& [g, c] : cand) {
    auto it = ref.find(g);
    if (it != ref.end()) total += std::min(c, it->second);
  }
  return total;
}

double f_measure(double precision, double recall) {
  if (precision <= 0.0 || recall <= 0.0) return 0.0;
  const double b2 = kRougeBeta * kRougeBeta;
  return (1.0 + b2) * precision * recall / (recall + b2 * precision);
}

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0);
  std::vector<std::size_t> cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace

double rmse(std::span<const double> preds, std::span<const double> targets) {
  check_lengths(preds, targets);
  double s = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) s += (preds[i] - targets[i]) * (preds[i] - targets[i]);
  return std::sqrt(s / static_cast<double>(preds.size()));
}

double mae(std::span<const double> preds, std::span<const double> targets) {
  check_lengths(preds, targets);
  double s = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) s += std::abs(preds[i] - targets[i]);
  return s / static_cast<double>(preds.size());
}

int rank_of(const RankedList& list) {
  auto it = std::find(list.items.begin(), list.items.end(), list.ground_truth);
  return it == list.items.end() ? 0 : static_cast<int>(it - list.items.begin()) + 1;
}

double hr_at_k(std::span<const RankedList> lists, int k) {
  check_lists(lists, k);
  double hits = 0.0;
  for (const auto& l : lists) {
    const int r = rank_of(l);
    if (r >= 1 && r <= k) hits += 1.0;
  }
  return hits / static_cast<double>(lists.size());
}

double ndcg_at_k(std::span<const RankedList> lists, int k) {
  check_lists(lists, k);
  double total = 0.0;
  for (const auto& l : lists) {
    const int r = rank_of(l);
    if (r >= 1 && r <= k) total += 1.0 / std::log2(static_cast<double>(r) + 1.0);
  }
  return total / static_cast<double>(lists.size());
}

std::vector<std::string> normalize_tokens(const std::string& text) {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  std::istringstream in(lower);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

double bleu4(std::span<const TextPair> pairs) {
  if (pairs.empty()) throw EvalError("BLEU needs at least one pair");
  double matches[4] = {0, 0, 0, 0};
  double totals[4] = {0, 0, 0, 0};
  double cand_len = 0.0;
  double ref_len = 0.0;
  for (const auto& p : pairs) {
    const auto c = normalize_tokens(p.candidate);
    const auto r = normalize_tokens(p.reference);
    cand_len += static_cast<double>(c.size());
    ref_len += static_cast<double>(r.size());
    for (int n = 1; n <= 4; ++n) {
      matches[n - 1] += overlap(ngrams(c, n), ngrams(r, n));
      totals[n - 1] += static_cast<double>(std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(c.size()) - n + 1));
    }
  }
  if (cand_len == 0.0) throw EvalError("BLEU candidates are all empty");
  double log_sum = 0.0;
  for (int n = 0; n < 4; ++n) {
    const double num = matches[n] > 0.0 ? matches[n] : kBleuSmoothing;
    const double den = totals[n] > 0.0 ? totals[n] : 1.0;
    log_sum += std::log(num / den);
  }
  const double bp = cand_len >= ref_len ? 1.0 : std::exp(1.0 - ref_len / cand_len);
  return bp * std::exp(log_sum / 4.0);
}

double rouge_n(std::span<const TextPair> pairs, int n) {
  if (n < 1 || n > 2) throw EvalError("ROUGE-N supports n = 1 or 2");
  if (pairs.empty()) throw EvalError("ROUGE needs at least one pair");
  double total = 0.0;
  for (const auto& p : pairs) {
    const auto c = normalize_tokens(p.candidate);
    const auto r = normalize_tokens(p.reference);
    if (r.empty()) throw EvalError("ROUGE reference is empty");
    const auto cg = ngrams(c, n);
    const auto rg = ngrams(r, n);
    double c_count = 0.0;
    double r_count = 0.0;
    for (const auto& [g, k] : cg) c_count += k;
    for (const auto& [g, k] : rg) r_count += k;
    const double hit = overlap(cg, rg);
    if (c_count == 0.0 || r_count == 0.0) continue;
    total += f_measure(hit / c_count, hit / r_count);
  }
  return total / static_cast<double>(pairs.size());
}

double rouge_l(std::span<const TextPair> pairs) {
  if (pairs.empty()) throw EvalError("ROUGE needs at least one pair");
  double total = 0.0;
  for (const auto& p : pairs) {
    const auto c = normalize_tokens(p.candidate);
    const auto r = normalize_tokens(p.reference);
    if (r.empty()) throw EvalError("ROUGE reference is empty");
    if (c.empty()) continue;
    const auto lcs = static_cast<double>(lcs_length(c, r));
    total += f_measure(lcs / static_cast<double>(c.size()), lcs / static_cast<double>(r.size()));
  }
  return total / static_cast<double>(pairs.size());
}

}  // namespace p5rec::eval
