#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "p5rec/data/corpus.hpp"
#include "p5rec/model/transformer.hpp"
#include "p5rec/prompt/registry.hpp"
#include "p5rec/text/tokenizer.hpp"
#include "p5rec/train/trainer.hpp"

namespace p5rec::eval {

enum class Setting { all_item, cand100, scalar, text };

std::string_view setting_name(Setting setting);
Setting parse_setting(std::string_view text);

/// What an evaluation run is asked to do.
struct ExperimentSpec {
  std::string dataset_id;
  std::string holdout = "last";
  std::string checkpoint;
  prompt::TaskFamily family = prompt::TaskFamily::rating;
  std::vector<prompt::PromptId> prompts;
  Setting setting = Setting::scalar;
  std::filesystem::path output;
  std::uint64_t seed = 1;
  int beam = 20;

  /// Throws EvalError when a prompt belongs to another family or the
  /// setting does not fit the family.
  void validate() const;
};

/// The setting a template is evaluated under, from its family and target.
Setting default_setting(const prompt::PromptTemplate& tmpl);

struct EvalReport {
  std::string prompt_id;
  std::string family;
  std::string setting;
  std::string split = "test";
  bool seen = true;
  std::map<std::string, double> metrics;
  std::map<std::string, std::size_t> counts;
  std::vector<std::string> notes;
  double runtime_seconds = 0.0;
  std::string checkpoint_id;

  nlohmann::json to_json() const;
};

/// Everything an evaluation reads. All references must outlive the call.
struct EvalContext {
  const model::Seq2SeqModel* model = nullptr;
  const text::Vocab* vocab = nullptr;
  const data::PreparedData* data = nullptr;
  const prompt::Registry* registry = nullptr;
  const prompt::RegistrySplit* split = nullptr;
  data::CorpusOptions corpus;
  std::uint64_t seed = 1;
  data::SplitTag eval_split = data::SplitTag::test;
  int max_decode_len = 32;
  std::string checkpoint_id;
  /// Cap on the number of queries; 0 means all.
  std::size_t max_queries = 0;
  /// Item prompts decode inside an item trie. When false the beam runs over
  /// the whole vocabulary and outputs count only if they exactly spell a
  /// catalog (or candidate) item.
  bool constrained = true;
};

/// Numeric targets (star ratings): greedy decode, parse, RMSE/MAE.
/// Unparseable outputs score 3.0 and are counted; more than half
/// unparseable fails the run. Yes/no and like/dislike targets report
/// accuracy instead.
EvalReport eval_rating(const EvalContext& ctx, const prompt::PromptId& id);

/// Item prompts of the sequential family: constrained beam over the whole
/// catalog (or the rendered candidates), HR@{5,10} and NDCG@{5,10}.
EvalReport eval_sequential(const EvalContext& ctx, const prompt::PromptId& id, int beam);

/// Direct recommendation over per-query candidate sets: HR@{1,5,10},
/// NDCG@{5,10}. Yes/no prompts rank candidates by the probability of "yes".
EvalReport eval_direct(const EvalContext& ctx, const prompt::PromptId& id, int beam);

/// Explanation and review-summary prompts: greedy decode, BLEU-4 and
/// ROUGE-1/2/L. Review-preference prompts take the rating path.
EvalReport eval_generation(const EvalContext& ctx, const prompt::PromptId& id);

/// Dispatches on the template's family and target.
EvalReport evaluate(const EvalContext& ctx, const prompt::PromptId& id, int beam = 20);

/// Parses a generated rating; nullopt unless the text is a plain number.
std::optional<double> parse_rating(const std::string& text);

/// Throws EvalError when the history shown for a held-out item is not the
/// strict prefix of the user's sequence before that item.
void leakage_guard(const data::Datum& datum, const std::vector<std::string>& full_sequence);

/// End-to-end system settings shared by pretraining and the ablations.
struct SystemConfig {
  data::CorpusOptions corpus;
  std::string holdout = "last";
  int vocab_size = 2048;
  bool atomic_ids = false;
  std::string model_preset = "toy";
  /// Multiplies d_model and d_ff of the preset.
  int width_multiplier = 1;
  int max_len = 128;
  train::TrainConfig train;
  std::uint64_t seed = 1;

  nlohmann::json to_json() const;
  /// Inverse of to_json; missing keys keep their defaults.
  static SystemConfig from_json(const nlohmann::json& j);
};

struct TrainedSystem {
  text::Vocab vocab;
  model::Seq2SeqModel model;
  prompt::RegistrySplit split;
  data::BuildReport corpus;
  train::TrainReport train;
};

/// Builds the training stream, trains the vocabulary, initializes and
/// trains the model. With `epochs == 0` the model stays at initialization.
TrainedSystem pretrain_system(const data::PreparedData& data, const prompt::Registry& registry,
                              const SystemConfig& config, const train::TrainOptions& options = {});

/// Vocabulary trained on the rendered pairs, extended with one token per
/// user and item in atomic-id mode.
text::Vocab build_vocab(const std::vector<data::TrainingPair>& pairs, const data::Dataset& dataset,
                        int vocab_size, bool atomic_ids);

/// Prompts used when transferring across domains.
struct TransferPrompts {
  prompt::PromptId like_dislike{1, 9};
  prompt::PromptId rating{1, 10};
  prompt::PromptId explanation{3, 12};
  /// Ranked with constrained decoding and with exact string match.
  prompt::PromptId pick{5, 8};
  int beam = 20;
};

struct TransferResult {
  data::TransferStats stats;
  std::vector<EvalReport> reports;
};

/// Evaluates a source-domain model on target-domain reviews of users the
/// source domain shares. Throws EvalError when no user is shared and
/// TokenizerError when atomic ids cannot cover a target item.
TransferResult transfer_zero_shot(const model::Seq2SeqModel& model, const text::Vocab& vocab,
                                  const data::Dataset& source, const data::Dataset& target,
                                  const prompt::Registry& registry, const prompt::RegistrySplit& split,
                                  const data::CorpusOptions& corpus, std::uint64_t seed,
                                  const TransferPrompts& prompts = {});

/// Ranks each shared user's target item among sampled target items with the
/// pick prompt, once with constrained decoding and once with exact string
/// match. The target items are unseen in training.
std::vector<EvalReport> transfer_item_ranking(const model::Seq2SeqModel& model, const text::Vocab& vocab,
                                              const data::Dataset& source, const data::Dataset& target,
                                              const prompt::Registry& registry, const prompt::RegistrySplit& split,
                                              const data::CorpusOptions& corpus, std::uint64_t seed,
                                              const TransferPrompts& prompts = {});

enum class AblationKind { task_scaling, prompt_scaling, personalization, model_size };

std::string_view ablation_name(AblationKind kind);
AblationKind parse_ablation(std::string_view text);

struct VariantResult {
  std::string name;
  SystemConfig config;
  std::int64_t parameters = 0;
  int vocab_size = 0;
  std::size_t training_pairs = 0;
  double final_loss = 0.0;
  std::vector<EvalReport> reports;
};

struct AblationReport {
  std::string kind;
  std::vector<VariantResult> variants;
  /// Set when a variant failed; earlier variants are kept.
  std::optional<std::string> failure;

  nlohmann::json to_json() const;
};

/// Variants compared by each ablation kind.
std::vector<std::pair<std::string, SystemConfig>> ablation_variants(AblationKind kind, const SystemConfig& base);

/// Trains every variant on the same data and seed and evaluates each on
/// `prompts`.
AblationReport run_ablation(AblationKind kind, const SystemConfig& base, const data::PreparedData& data,
                            const prompt::Registry& registry, const std::vector<prompt::PromptId>& prompts,
                            int beam = 20,
                            const std::function<void(const std::string&)>& progress = {});

}  // namespace p5rec::eval
