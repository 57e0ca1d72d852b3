#pragma once

// Independent reference implementations used by the unit tests and the
// acceptance binary. Deliberately naive.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "p5rec/decode/search.hpp"

namespace oracle {

/// Next-token distribution drawn afresh for every prefix. Logits are
/// quantized when `ties` is set so that equal scores actually occur.
class TableScorer {
 public:
  TableScorer(int vocab, std::uint64_t seed, bool ties = false) : vocab_(vocab), seed_(seed), ties_(ties) {}

  p5rec::model::RowVector operator()(std::span<const int> prefix) const {
    std::uint64_t h = seed_ * 0x9e3779b97f4a7c15ULL + 1;
    for (int t : prefix) h = (h ^ static_cast<std::uint64_t>(t + 1)) * 0x100000001b3ULL;
    std::mt19937_64 rng(h);
    std::normal_distribution<double> normal(0.0, 2.0);
    std::vector<double> logits(static_cast<std::size_t>(vocab_));
    for (auto& l : logits) l = ties_ ? std::round(normal(rng)) : normal(rng);
    double m = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double l : logits) z += std::exp(l - m);
    p5rec::model::RowVector out(vocab_);
    for (int i = 0; i < vocab_; ++i) out[i] = logits[static_cast<std::size_t>(i)] - m - std::log(z);
    return out;
  }

  p5rec::decode::LogProbFn fn() const {
    return [s = *this](std::span<const int> prefix) { return s(prefix); };
  }

 private:
  int vocab_;
  std::uint64_t seed_;
  bool ties_;
};

struct Scored {
  std::vector<int> tokens;
  double score = 0.0;
};

/// Every sequence over ids 1..V-1 that ends with end-of-sequence (id 1) and
/// has at most `max_len` tokens, scored by summing step log-probabilities.
/// `keep` filters complete sequences (e.g. trie membership).
inline std::vector<Scored> enumerate_finished(const p5rec::decode::LogProbFn& scorer, int vocab, int max_len,
                                              const std::function<bool(const std::vector<int>&)>& keep = {}) {
  std::vector<Scored> out;
  std::function<void(std::vector<int>&, double)> rec = [&](std::vector<int>& prefix, double score) {
    if (static_cast<int>(prefix.size()) == max_len) return;
    const auto lp = scorer(prefix);
    for (int t = 1; t < vocab; ++t) {
      prefix.push_back(t);
      const double s = score + lp[t];
      if (t == 1) {
        if (!keep || keep(prefix)) out.push_back({prefix, s});
      } else {
        rec(prefix, s);
      }
      prefix.pop_back();
    }
  };
  std::vector<int> prefix;
  rec(prefix, 0.0);
  std::sort(out.begin(), out.end(), [](const Scored& a, const Scored& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.tokens < b.tokens;
  });
  return out;
}

/// Number of prefixes the beam might need to keep alive at once.
inline int sufficient_beam(int vocab, int max_len) {
  int total = 0;
  int level = 1;
  for (int l = 0; l < max_len; ++l) {
    level *= vocab - 1;
    total += level;
  }
  return total;
}

// --- metrics ---------------------------------------------------------------

inline std::vector<std::string> words(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    if (ch == ' ' || ch == '\t' || ch == '\n') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(static_cast<char>(ch >= 'A' && ch <= 'Z' ? ch - 'A' + 'a' : ch));
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

inline std::vector<std::string> grams(const std::vector<std::string>& w, std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i + n <= w.size(); ++i) {
    std::string g;
    for (std::size_t k = 0; k < n; ++k) g += w[i + k] + "\x1f";
    out.push_back(g);
  }
  return out;
}

/// Matches each candidate gram against a not-yet-used reference gram.
inline int clipped_matches(const std::vector<std::string>& cand, std::vector<std::string> ref) {
  int hits = 0;
  for (const auto& g : cand) {
    for (auto& r : ref) {
      if (r == g) {
        r.clear();
        ++hits;
        break;
      }
    }
  }
  return hits;
}

inline int lcs(const std::vector<std::string>& a, const std::vector<std::string>& b, std::size_t i = 0,
               std::size_t j = 0, std::map<std::pair<std::size_t, std::size_t>, int>* memo = nullptr) {
  std::map<std::pair<std::size_t, std::size_t>, int> local;
  if (!memo) memo = &local;
  if (i == a.size() || j == b.size()) return 0;
  auto it = memo->find({i, j});
  if (it != memo->end()) return it->second;
  int best = a[i] == b[j] ? 1 + lcs(a, b, i + 1, j + 1, memo)
                          : std::max(lcs(a, b, i + 1, j, memo), lcs(a, b, i, j + 1, memo));
  (*memo)[{i, j}] = best;
  return best;
}

inline double f_beta(double hit, double cand, double ref, double beta) {
  if (hit == 0.0 || cand == 0.0 || ref == 0.0) return 0.0;
  const double p = hit / cand;
  const double r = hit / ref;
  return (1 + beta * beta) * p * r / (r + beta * beta * p);
}

using Pair = std::pair<std::string, std::string>;  // candidate, reference

inline double bleu4(const std::vector<Pair>& pairs, double smoothing) {
  double log_p = 0.0;
  double c_len = 0.0;
  double r_len = 0.0;
  for (std::size_t n = 1; n <= 4; ++n) {
    double hit = 0.0;
    double total = 0.0;
    for (const auto& [c, r] : pairs) {
      const auto cg = grams(words(c), n);
      hit += clipped_matches(cg, grams(words(r), n));
      total += static_cast<double>(cg.size());
    }
    log_p += std::log((hit == 0.0 ? smoothing : hit) / (total == 0.0 ? 1.0 : total)) / 4.0;
  }
  for (const auto& [c, r] : pairs) {
    c_len += static_cast<double>(words(c).size());
    r_len += static_cast<double>(words(r).size());
  }
  const double bp = c_len < r_len ? std::exp(1.0 - r_len / c_len) : 1.0;
  return bp * std::exp(log_p);
}

inline double rouge_n(const std::vector<Pair>& pairs, std::size_t n, double beta) {
  double sum = 0.0;
  for (const auto& [c, r] : pairs) {
    const auto cg = grams(words(c), n);
    const auto rg = grams(words(r), n);
    sum += f_beta(clipped_matches(cg, rg), static_cast<double>(cg.size()), static_cast<double>(rg.size()), beta);
  }
  return sum / static_cast<double>(pairs.size());
}

inline double rouge_l(const std::vector<Pair>& pairs, double beta) {
  double sum = 0.0;
  for (const auto& [c, r] : pairs) {
    const auto cw = words(c);
    const auto rw = words(r);
    sum += f_beta(lcs(cw, rw), static_cast<double>(cw.size()), static_cast<double>(rw.size()), beta);
  }
  return sum / static_cast<double>(pairs.size());
}

/// Hit ratio and NDCG with a single relevant item, from the DCG definition.
inline double hit(const std::vector<std::string>& ranked, const std::string& truth, int k) {
  for (int i = 0; i < k && i < static_cast<int>(ranked.size()); ++i) {
    if (ranked[static_cast<std::size_t>(i)] == truth) return 1.0;
  }
  return 0.0;
}

inline double ndcg(const std::vector<std::string>& ranked, const std::string& truth, int k) {
  double dcg = 0.0;
  for (int i = 0; i < k && i < static_cast<int>(ranked.size()); ++i) {
    const double rel = ranked[static_cast<std::size_t>(i)] == truth ? 1.0 : 0.0;
    dcg += (std::pow(2.0, rel) - 1.0) / (std::log(i + 2.0) / std::log(2.0));
  }
  return dcg;  // ideal DCG with one relevant item is 1
}

/// Expected HR@k and NDCG@k when the truth sits uniformly among n slots.
inline double chance_hr(int k, int n) { return std::min(k, n) / static_cast<double>(n); }
inline double chance_ndcg(int k, int n) {
  double s = 0.0;
  for (int r = 1; r <= std::min(k, n); ++r) s += 1.0 / std::log2(r + 1.0);
  return s / n;
}

}  // namespace oracle
