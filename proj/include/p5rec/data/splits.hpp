#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "p5rec/data/dataset.hpp"

namespace p5rec::data {

enum class SplitTag { train, valid, test };

std::string_view split_name(SplitTag tag);

/// Review indices per subset, each sorted ascending.
struct RatingSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> valid;
  std::vector<std::size_t> test;
  std::vector<std::string> warnings;
};

/// Random review split in which every user and every item keeps at least
/// one review in train. Subset sizes match the ratios to within one record
/// unless coverage forces a larger train subset.
RatingSplit split_rating_data(const std::vector<RawReview>& reviews, std::array<double, 3> ratios, std::uint64_t seed);

/// Leave-one-out: last item is test, second-to-last valid, the rest train.
struct SequenceSplit {
  std::string user_id;
  std::vector<std::string> train;
  std::string valid;
  std::string test;
};

/// nullopt for sequences shorter than three items.
std::optional<SequenceSplit> split_sequential(const InteractionSequence& seq);

struct SequentialSplits {
  std::vector<SequenceSplit> users;
  std::vector<std::string> skipped_users;  // sequences shorter than three
};

SequentialSplits split_all_sequences(const std::vector<InteractionSequence>& sequences);

/// `n` distinct items drawn uniformly without replacement from
/// `pool \ interacted`. Throws DataError when fewer are available.
std::vector<std::string> sample_negatives(const std::set<std::string>& interacted, const std::vector<std::string>& pool,
                                          std::size_t n, std::uint64_t seed);

/// One positive plus sampled negatives.
struct CandidateSet {
  std::string positive;
  std::vector<std::string> negatives;

  std::size_t size() const { return negatives.size() + 1; }
  /// Positive and negatives in a seed-determined order.
  std::vector<std::string> shuffled(std::uint64_t seed) const;
};

CandidateSet make_candidate_set(const std::string& positive, const std::set<std::string>& interacted,
                                const std::vector<std::string>& pool, std::size_t size, std::uint64_t seed);

/// Throws DataError unless: positive not among negatives, negatives
/// distinct, no negative interacted by the user.
void validate_candidate_set(const CandidateSet& set, const std::set<std::string>& interacted);

/// round_1(clamp(score + N(0, sigma^2), 1, 5)): one of the 41 values
/// 1.0, 1.1, ..., 5.0.
double perturb_rating(int score, double sigma, std::uint64_t seed);

/// Formats a grid rating with one decimal, e.g. "4.3".
std::string format_rating(double value);

/// True when `value` is one of the 41 grid values.
bool on_rating_grid(double value);

}  // namespace p5rec::data
