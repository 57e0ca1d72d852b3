#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "p5rec/data/dataset.hpp"
#include "p5rec/data/splits.hpp"
#include "p5rec/prompt/registry.hpp"

namespace p5rec::data {

struct TrainingPair {
  std::string input_text;
  std::string target_text;
  prompt::PromptId prompt_id;
  prompt::TaskFamily family = prompt::TaskFamily::rating;
  SplitTag split = SplitTag::train;

  bool operator==(const TrainingPair&) const = default;
};

struct CorpusOptions {
  /// Probability that a given pretrain template is rendered for a datum.
  double sample_fraction = 0.8;
  /// Families to emit; empty means all five.
  std::set<prompt::TaskFamily> families;
  double rating_sigma = 0.3;
  std::array<double, 3> rating_ratios = {0.8, 0.1, 0.1};
  std::size_t seq_candidates = 20;
  std::size_t direct_candidates = 100;
  std::size_t max_history = 20;
  std::string list_separator = ", ";

  bool wants(prompt::TaskFamily family) const { return families.empty() || families.count(family) > 0; }
};

/// A dataset with its review split, leave-one-out sequences and
/// per-user interaction sets computed once.
struct PreparedData {
  Dataset dataset;
  RatingSplit rating;
  SequentialSplits sequential;
  std::map<std::string, std::set<std::string>> interacted;
  std::vector<std::string> item_pool;
};

PreparedData prepare_data(Dataset dataset, const CorpusOptions& options, std::uint64_t seed);

/// One raw example of a family, with bindings for every template category
/// of that family plus the ground truth used by evaluation.
struct Datum {
  prompt::TaskFamily family = prompt::TaskFamily::rating;
  SplitTag split = SplitTag::train;
  std::string key;  // stable across runs, used for per-datum randomness
  prompt::FieldBindings bindings;
  std::string user_id;
  std::string item_id;  // rated item, or next/positive item
  int rating = 0;
  std::vector<std::string> history;
  std::vector<std::string> candidates;  // shuffled, positive included
  std::optional<std::string> feature_word;
};

/// Surface form of an item inside prompts and targets.
std::string item_token(const std::string& item_id);

/// Review-based data (rating, explanation, review families) for the given
/// review indices. Training data carries perturbed star ratings; other
/// splits keep the integer score.
std::vector<Datum> make_review_data(const Dataset& dataset, std::span<const std::size_t> review_indices,
                                    prompt::TaskFamily family, SplitTag split, const CorpusOptions& options,
                                    std::uint64_t seed);

/// Data for `family` in `split`. Sequential training data uses every prefix
/// of a user's training items; direct positives come from the same training
/// items, so held-out sequence items never become direct targets.
std::vector<Datum> make_data(const PreparedData& data, prompt::TaskFamily family, SplitTag split,
                             const CorpusOptions& options, std::uint64_t seed);

struct BuildReport {
  std::vector<TrainingPair> pairs;
  std::map<std::string, std::size_t> rendered_per_prompt;
  std::map<std::string, std::size_t> skipped_per_prompt;  // missing fields
  std::size_t skipped_total = 0;
};

/// Training stream: for each train datum of each requested family, every
/// pretrain template of that family is rendered independently with
/// probability `options.sample_fraction`. Held-out templates are never used.
BuildReport build_pairs(const PreparedData& data, const prompt::Registry& registry, const prompt::RegistrySplit& split,
                        const CorpusOptions& options, std::uint64_t seed);

/// Renders one template over every datum of its family in `split`.
BuildReport build_eval_pairs(const PreparedData& data, const prompt::Registry& registry, const prompt::PromptId& id,
                             SplitTag split, const CorpusOptions& options, std::uint64_t seed);

/// Throws DataError if any train pair uses a held-out prompt.
void assert_no_leakage(const std::vector<TrainingPair>& pairs, const prompt::RegistrySplit& split);

/// Sorts by (split, prompt id, input, target) for byte-stable output.
void canonical_order(std::vector<TrainingPair>& pairs);

void write_pairs(std::ostream& out, const std::vector<TrainingPair>& pairs);
std::vector<TrainingPair> read_pairs(std::istream& in);
void write_pairs_file(const std::filesystem::path& path, const std::vector<TrainingPair>& pairs);
std::vector<TrainingPair> read_pairs_file(const std::filesystem::path& path);

}  // namespace p5rec::data
