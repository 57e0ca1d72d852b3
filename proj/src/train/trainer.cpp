#include "p5rec/train/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "p5rec/model/checkpoint.hpp"

namespace p5rec::train {

void TrainConfig::validate() const {
  if (epochs < 1 && max_steps <= 0) throw TrainingError("epochs must be positive");
  if (batch_size < 1) throw TrainingError("batch_size must be positive");
  if (!(peak_lr >= 0.0)) throw TrainingError("peak_lr must be non-negative");
  if (!(warmup_fraction > 0.0 && warmup_fraction < 1.0)) throw TrainingError("warmup_fraction must lie in (0, 1)");
  if (weight_decay < 0.0) throw TrainingError("weight_decay must be non-negative");
}

double lr_at(std::int64_t step, std::int64_t total_steps, const TrainConfig& config) {
  if (total_steps <= 0) throw TrainingError("learning-rate schedule needs total_steps > 0");
  if (step < 0 || step > total_steps) throw TrainingError("step outside the schedule");
  const double warmup = config.warmup_fraction * static_cast<double>(total_steps);
  const double s = static_cast<double>(step);
  if (s <= warmup) return warmup > 0.0 ? config.peak_lr * s / warmup : config.peak_lr;
  return config.peak_lr * (static_cast<double>(total_steps) - s) / (static_cast<double>(total_steps) - warmup);
}

AdamW::AdamW(const model::Seq2SeqModel& model, const TrainConfig& config) : config_(config) {
  for (const auto& p : model.parameters()) {
    m_.push_back(model::Matrix::Zero(p.value.rows(), p.value.cols()));
    v_.push_back(model::Matrix::Zero(p.value.rows(), p.value.cols()));
  }
}

void AdamW::step(model::Seq2SeqModel& model, const model::Gradients& grads, double lr) {
  ++t_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  auto& params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    if (!p.trainable) continue;
    const auto& g = grads.tensors[i];
    m_[i] = b1 * m_[i] + (1.0 - b1) * g;
    v_[i] = b2 * v_[i] + (1.0 - b2) * g.cwiseProduct(g);
    // norms are not decayed
    const bool decay = !(p.name.ends_with(".gain") || p.name.ends_with(".bias"));
    if (decay && config_.weight_decay > 0.0) p.value *= (1.0 - lr * config_.weight_decay);
    p.value.array() -= lr * ((m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + config_.adam_eps));
  }
}

namespace {

int target_tokens(const model::Example& ex) {
  return static_cast<int>(std::count_if(ex.target.begin(), ex.target.end(), [](int t) { return t != text::kPadId; }));
}

void write_marker(const std::filesystem::path& dir, const char* name, const std::string& value) {
  std::ofstream out(dir / name, std::ios::trunc);
  out << value << "\n";
}

}  // namespace

TrainReport train(std::span<const model::Example> examples, model::Seq2SeqModel& model, const TrainConfig& config,
                  const TrainOptions& options) {
  config.validate();
  if (examples.empty()) throw TrainingError("training needs at least one example");
  const auto start = std::chrono::steady_clock::now();

  const auto n = static_cast<std::int64_t>(examples.size());
  const std::int64_t steps_per_epoch = (n + config.batch_size - 1) / config.batch_size;
  const std::int64_t total = config.max_steps > 0 ? config.max_steps : config.epochs * steps_per_epoch;
  const int epochs = static_cast<int>((total + steps_per_epoch - 1) / steps_per_epoch);

  std::ofstream log;
  if (options.checkpoint_dir) {
    std::filesystem::create_directories(*options.checkpoint_dir);
    log.open(*options.checkpoint_dir / "train_log.jsonl", std::ios::trunc);
  }

  AdamW optimizer(model, config);
  Rng shuffle_rng(derive_seed(config.seed, 1));
  Rng dropout_rng(derive_seed(config.seed, 2));
  auto grads = model.make_gradients();
  std::vector<std::size_t> order(examples.size());

  TrainReport report;
  double best_epoch_loss = std::numeric_limits<double>::infinity();
  std::int64_t step = 0;
  for (int epoch = 0; epoch < epochs && step < total; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_sum = 0.0;
    long epoch_tokens = 0;
    for (std::int64_t b = 0; b < steps_per_epoch && step < total; ++b) {
      const auto lo = static_cast<std::size_t>(b * config.batch_size);
      const auto hi = std::min(order.size(), lo + static_cast<std::size_t>(config.batch_size));
      int tokens = 0;
      std::uint64_t fingerprint = 0xcbf29ce484222325ULL;
      for (auto i = lo; i < hi; ++i) {
        tokens += target_tokens(examples[order[i]]);
        fingerprint = mix64(fingerprint ^ order[i]);
      }
      grads.zero();
      double loss_sum = 0.0;
      const double scale = tokens > 0 ? 1.0 / tokens : 0.0;
      for (auto i = lo; i < hi; ++i) {
        loss_sum += model.forward_backward(examples[order[i]], grads, scale, model::Mode::training, &dropout_rng).sum;
      }
      const double grad_norm = std::sqrt(grads.squared_norm());
      if (!std::isfinite(loss_sum) || !std::isfinite(grad_norm)) {
        throw TrainingError("non-finite loss at step " + std::to_string(step) + " (batch fingerprint " +
                            to_hex(fingerprint) + ")");
      }
      if (config.clip_norm > 0.0 && grad_norm > config.clip_norm) grads.scale(config.clip_norm / grad_norm);
      const double lr = lr_at(step, total, config);
      optimizer.step(model, grads, lr);

      StepRecord rec{step, epoch, tokens > 0 ? loss_sum / tokens : 0.0, loss_sum, tokens, lr, grad_norm};
      report.steps.push_back(rec);
      epoch_sum += loss_sum;
      epoch_tokens += tokens;
      if (log.is_open()) {
        log << nlohmann::json{{"step", rec.step}, {"epoch", rec.epoch}, {"loss", rec.loss},
                              {"tokens", rec.tokens}, {"lr", rec.lr}, {"grad_norm", rec.grad_norm}}
                   .dump()
            << "\n";
      }
      if (options.on_step) options.on_step(rec);
      ++step;
    }
    const double epoch_loss = epoch_tokens > 0 ? epoch_sum / static_cast<double>(epoch_tokens) : 0.0;
    report.epoch_losses.push_back(epoch_loss);
    if (options.checkpoint_dir) {
      const std::string id = "step-" + std::to_string(step) + ".ckpt";
      model::save_checkpoint(*options.checkpoint_dir / id, model, options.vocab_hash, step);
      write_marker(*options.checkpoint_dir, "latest", id);
      if (epoch_loss < best_epoch_loss) {
        best_epoch_loss = epoch_loss;
        write_marker(*options.checkpoint_dir, "best", id);
      }
      report.checkpoint_id = id;
    }
    if (options.on_epoch) options.on_epoch(epoch);
  }
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

std::vector<model::Example> encode_pairs(std::span<const TextPair> pairs, const text::Vocab& vocab, int max_len) {
  std::vector<model::Example> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    model::Example ex;
    ex.source = text::encode(p.input_text, vocab, max_len);
    ex.target = text::encode(p.target_text, vocab, max_len).token_ids;
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace p5rec::train
