#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "p5rec/common.hpp"
#include "p5rec/model/config.hpp"
#include "p5rec/text/tokenizer.hpp"

namespace p5rec::model {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

struct Parameter {
  std::string name;
  Matrix value;
  bool trainable = true;
};

/// One gradient buffer per model parameter, in parameter order.
struct Gradients {
  std::vector<Matrix> tensors;

  void zero();
  double squared_norm() const;
  void scale(double factor);
};

enum class Mode { inference, training };

/// Encoder output: contextual rows plus the per-layer cross-attention keys
/// and values the decoder reads.
struct EncoderOutput {
  Matrix states;                 // n x d, after the final encoder norm
  std::vector<bool> key_valid;   // false at padding positions
  std::vector<Matrix> cross_keys;
  std::vector<Matrix> cross_values;
};

/// A single teacher-forced training example. `target` ends with
/// end-of-sequence.
struct Example {
  text::EncodedSequence source;
  std::vector<int> target;
};

struct LossValue {
  double sum = 0.0;   // negative log-likelihood summed over target tokens
  int tokens = 0;

  double mean() const { return tokens > 0 ? sum / tokens : 0.0; }
};

/// Encoder-decoder transformer with pre-norm residual blocks. Encoder
/// inputs are the sum of token, positional and whole-word embeddings.
class Seq2SeqModel {
 public:
  explicit Seq2SeqModel(const ModelConfig& config);
  ~Seq2SeqModel();
  Seq2SeqModel(Seq2SeqModel&&) noexcept;
  Seq2SeqModel& operator=(Seq2SeqModel&&) noexcept;
  Seq2SeqModel(const Seq2SeqModel& other);
  Seq2SeqModel& operator=(const Seq2SeqModel& other);

  const ModelConfig& config() const { return config_; }

  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  Parameter& parameter(const std::string& name);
  const Parameter& parameter(const std::string& name) const;
  Gradients make_gradients() const;
  std::int64_t trainable_parameter_count() const;

  /// Sum of token, positional and whole-word embeddings (n x d).
  Matrix embed(const text::EncodedSequence& seq) const;

  /// Bidirectional encoder over the non-padding positions.
  EncoderOutput encode(const text::EncodedSequence& seq) const;

  /// Teacher-forced decoder: row j holds next-token logits after
  /// prefix[0..j]. `prefix` starts with the decoder start token (pad).
  Matrix decode_logits(std::span<const int> prefix, const EncoderOutput& memory) const;

  /// Logits for the token following `prefix`; equals the last row of
  /// decode_logits.
  RowVector next_logits(std::span<const int> prefix, const EncoderOutput& memory) const;

  /// Loss for one example without gradients.
  LossValue loss(const Example& example) const;

  /// Loss plus gradients. Gradients are scaled by `grad_scale` and added
  /// into `grads`. `rng` drives dropout in training mode.
  LossValue forward_backward(const Example& example, Gradients& grads, double grad_scale = 1.0,
                             Mode mode = Mode::inference, Rng* rng = nullptr) const;

  static constexpr int kDecoderStart = text::kPadId;

  struct Layout;

 private:
  void build_layout();
  void init_parameters();

  ModelConfig config_;
  std::vector<Parameter> params_;
  std::unique_ptr<Layout> layout_;
};

/// Decoder input for teacher forcing: start token followed by target[:-1].
std::vector<int> shift_right(std::span<const int> target);

/// Sum-form negative log-likelihood of `targets` under row-wise softmax of
/// `logits`. Target ids equal to pad are skipped.
LossValue nll_loss(const Matrix& logits, std::span<const int> targets);

/// Row-wise log-softmax.
Matrix log_softmax_rows(const Matrix& logits);

}  // namespace p5rec::model
