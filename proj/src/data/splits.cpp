#include "p5rec/data/splits.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <random>

#include "p5rec/common.hpp"

namespace p5rec::data {

std::string_view split_name(SplitTag tag) {
  switch (tag) {
    case SplitTag::train: return "train";
    case SplitTag::valid: return "valid";
    case SplitTag::test: return "test";
  }
  return "unknown";
}

RatingSplit split_rating_data(const std::vector<RawReview>& reviews, std::array<double, 3> ratios,
                              std::uint64_t seed) {
  if (reviews.empty()) throw DataError("cannot split an empty review set");
  for (double r : ratios) {
    if (r < 0.0) throw DataError("split ratios must be non-negative");
  }
  if (std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9) throw DataError("split ratios must sum to 1");

  const std::size_t n = reviews.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, 0x5ba1));
  std::shuffle(order.begin(), order.end(), rng);

  std::map<std::string, int> user_count;
  std::map<std::string, int> item_count;
  for (const auto& r : reviews) {
    ++user_count[r.user_id];
    ++item_count[r.item_id];
  }

  RatingSplit split;
  enum : char { unassigned, train, valid, test };
  std::vector<char> assign(n, unassigned);
  std::set<std::string> users_covered;
  std::set<std::string> items_covered;
  std::size_t n_train = 0;
  for (auto i : order) {
    const auto& r = reviews[i];
    if (!users_covered.count(r.user_id) || !items_covered.count(r.item_id)) {
      assign[i] = train;
      ++n_train;
      users_covered.insert(r.user_id);
      items_covered.insert(r.item_id);
      if (user_count[r.user_id] == 1 || item_count[r.item_id] == 1) {
        split.warnings.push_back("review " + std::to_string(i) + " (user " + r.user_id + ", item " + r.item_id +
                                 ") is the only record of its user or item; pinned to train");
      }
    }
  }

  const auto target_train = static_cast<std::size_t>(std::llround(ratios[0] * static_cast<double>(n)));
  const std::size_t want_train = std::max(n_train, target_train);
  const std::size_t rest = n - want_train;
  const double held = ratios[1] + ratios[2];
  const auto want_valid =
      held > 0.0 ? static_cast<std::size_t>(std::llround(static_cast<double>(rest) * ratios[1] / held)) : 0;

  std::size_t n_valid = 0;
  for (auto i : order) {
    if (assign[i] != unassigned) continue;
    if (n_train < want_train) {
      assign[i] = train;
      ++n_train;
    } else if (n_valid < want_valid) {
      assign[i] = valid;
      ++n_valid;
    } else {
      assign[i] = test;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    (assign[i] == train ? split.train : assign[i] == valid ? split.valid : split.test).push_back(i);
  }
  return split;
}

std::optional<SequenceSplit> split_sequential(const InteractionSequence& seq) {
  const auto n = seq.items.size();
  if (n < 3) return std::nullopt;
  SequenceSplit s;
  s.user_id = seq.user_id;
  s.train.assign(seq.items.begin(), seq.items.end() - 2);
  s.valid = seq.items[n - 2];
  s.test = seq.items[n - 1];
  return s;
}

SequentialSplits split_all_sequences(const std::vector<InteractionSequence>& sequences) {
  SequentialSplits out;
  for (const auto& seq : sequences) {
    if (auto s = split_sequential(seq)) {
      out.users.push_back(std::move(*s));
    } else {
      out.skipped_users.push_back(seq.user_id);
    }
  }
  return out;
}

std::vector<std::string> sample_negatives(const std::set<std::string>& interacted, const std::vector<std::string>& pool,
                                          std::size_t n, std::uint64_t seed) {
  std::vector<std::string> available;
  std::set<std::string> seen;
  for (const auto& item : pool) {
    if (!interacted.count(item) && seen.insert(item).second) available.push_back(item);
  }
  if (available.size() < n) {
    throw DataError("need " + std::to_string(n) + " negatives but only " + std::to_string(available.size()) +
                    " non-interacted items are available");
  }
  // partial Fisher-Yates
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, available.size() - 1);
    std::swap(available[i], available[pick(rng)]);
  }
  available.resize(n);
  return available;
}

std::vector<std::string> CandidateSet::shuffled(std::uint64_t seed) const {
  std::vector<std::string> out = negatives;
  out.push_back(positive);
  Rng rng(seed);
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

CandidateSet make_candidate_set(const std::string& positive, const std::set<std::string>& interacted,
                                const std::vector<std::string>& pool, std::size_t size, std::uint64_t seed) {
  if (size < 1) throw DataError("candidate set size must be at least 1");
  auto excluded = interacted;
  excluded.insert(positive);
  return {positive, sample_negatives(excluded, pool, size - 1, seed)};
}

void validate_candidate_set(const CandidateSet& set, const std::set<std::string>& interacted) {
  std::set<std::string> seen;
  for (const auto& neg : set.negatives) {
    if (neg == set.positive) throw DataError("candidate set lists its positive " + neg + " as a negative");
    if (!seen.insert(neg).second) throw DataError("candidate set repeats negative " + neg);
    if (interacted.count(neg)) throw DataError("candidate negative " + neg + " was interacted by the user");
  }
}

double perturb_rating(int score, double sigma, std::uint64_t seed) {
  if (score < 1 || score > 5) throw DataError("rating " + std::to_string(score) + " outside [1, 5]");
  if (sigma < 0.0) throw DataError("sigma must be non-negative");
  double value = score;
  if (sigma > 0.0) {
    Rng rng(seed);
    std::normal_distribution<double> noise(0.0, sigma);
    value += noise(rng);
  }
  value = std::clamp(value, 1.0, 5.0);
  return std::round(value * 10.0) / 10.0;
}

std::string format_rating(double value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", value);
  return buf;
}

bool on_rating_grid(double value) {
  const double tenths = value * 10.0;
  return value >= 1.0 && value <= 5.0 && std::abs(tenths - std::round(tenths)) < 1e-9;
}

}  // namespace p5rec::data
