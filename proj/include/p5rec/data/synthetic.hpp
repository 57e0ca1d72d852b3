#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "p5rec/data/dataset.hpp"

namespace p5rec::data {

enum class PlantedRule {
  successor,  // next = perm(last), perm a single cycle within each item group
  sum_mod,    // next = (a + b) mod items over zero-based local indices of the last two
};

struct SyntheticSpec {
  std::size_t users = 50;
  std::size_t items = 20;  // per domain
  std::size_t min_len = 5;
  std::size_t max_len = 8;
  PlantedRule rule = PlantedRule::successor;
  /// Items of a domain split into this many contiguous groups; each user
  /// stays inside one group. Only meaningful for the successor rule.
  std::size_t groups = 1;
  std::vector<std::string> domains = {"main"};
  std::vector<std::string> feature_words = {"price", "quality", "color", "size", "smell", "texture", "design", "weight"};
  /// Seeds the per-user rating habit independently of `seed`, so two
  /// datasets generated with different seeds share user tastes.
  std::uint64_t habit_seed = 7;
  bool named_users = true;
};

struct SyntheticDataset {
  Dataset dataset;
  SyntheticSpec spec;
  std::string rule_description;
  /// Successor table over item ids (successor rule only).
  std::map<std::string, std::string> successor;
  std::map<std::string, bool> generous_user;
  std::map<std::string, std::size_t> user_group;

  /// Item the planted rule predicts after `history`, or nullopt when the
  /// history is too short or contains foreign ids.
  std::optional<std::string> expected_next(const std::vector<std::string>& history) const;
};

/// Item id for zero-based `local` index within domain number `domain`.
std::string synthetic_item_id(const SyntheticSpec& spec, std::size_t domain, std::size_t local);

/// Deterministic in (spec, seed). Throws DataError for infeasible specs.
SyntheticDataset generate_synthetic_dataset(const SyntheticSpec& spec, std::uint64_t seed);

}  // namespace p5rec::data
