#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "p5rec/model/transformer.hpp"
#include "p5rec/text/tokenizer.hpp"

namespace p5rec::train {

struct TrainConfig {
  int epochs = 10;
  int batch_size = 32;
  double peak_lr = 1e-3;
  double warmup_fraction = 0.05;
  double weight_decay = 0.01;
  double clip_norm = 1.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 1;
  /// When positive, stop after this many optimizer steps (the schedule is
  /// laid out over this horizon).
  std::int64_t max_steps = 0;

  void validate() const;
};

/// Linear warmup from 0 to peak over the first warmup_fraction of the run,
/// then linear decay to 0 at total_steps.
double lr_at(std::int64_t step, std::int64_t total_steps, const TrainConfig& config);

/// Decoupled weight decay Adam.
class AdamW {
 public:
  AdamW(const model::Seq2SeqModel& model, const TrainConfig& config);

  void step(model::Seq2SeqModel& model, const model::Gradients& grads, double lr);
  std::int64_t steps_taken() const { return t_; }

 private:
  TrainConfig config_;
  std::vector<model::Matrix> m_;
  std::vector<model::Matrix> v_;
  std::int64_t t_ = 0;
};

struct StepRecord {
  std::int64_t step = 0;
  int epoch = 0;
  double loss = 0.0;       // mean negative log-likelihood per target token
  double loss_sum = 0.0;   // summed over the batch
  int tokens = 0;
  double lr = 0.0;
  double grad_norm = 0.0;  // before clipping
};

struct TrainReport {
  std::vector<StepRecord> steps;
  std::vector<double> epoch_losses;
  double wall_seconds = 0.0;
  std::string checkpoint_id;
};

struct TrainOptions {
  /// When set, checkpoints, markers and the step log go here.
  std::optional<std::filesystem::path> checkpoint_dir;
  std::uint64_t vocab_hash = 0;
  /// Called after every optimizer step.
  std::function<void(const StepRecord&)> on_step;
  /// Called after every epoch with the epoch index.
  std::function<void(int)> on_epoch;
};

/// Mini-batch training on pre-encoded examples. The batch order is
/// reshuffled every epoch from `config.seed`.
TrainReport train(std::span<const model::Example> examples, model::Seq2SeqModel& model, const TrainConfig& config,
                  const TrainOptions& options = {});

struct TextPair {
  std::string input_text;
  std::string target_text;
};

/// Encodes (input, target) text pairs into teacher-forced examples.
std::vector<model::Example> encode_pairs(std::span<const TextPair> pairs, const text::Vocab& vocab, int max_len);

}  // namespace p5rec::train
