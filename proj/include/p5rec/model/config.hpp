#pragma once

#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

namespace p5rec::model {

enum class PositionalKind { learned, sinusoidal };

struct ModelConfig {
  int enc_layers = 2;
  int dec_layers = 2;
  int d_model = 64;
  int heads = 4;
  int d_ff = 128;
  int vocab_size = 0;
  int max_len = 128;
  int max_whole_words = 128;
  double dropout_rate = 0.0;
  std::uint64_t seed = 1;
  PositionalKind positional = PositionalKind::learned;

  /// 2/2 layers, d=64, 4 heads. Used by tests and desk-scale runs.
  static ModelConfig toy(int vocab_size);
  /// 6/6 layers, d=512, 8 heads.
  static ModelConfig small(int vocab_size);
  /// 12/12 layers, d=768, 12 heads.
  static ModelConfig base(int vocab_size);
  static ModelConfig preset(const std::string& name, int vocab_size);

  int head_dim() const { return d_model / heads; }
  /// Throws ModelError when the shapes are inconsistent.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

/// Closed-form count of trainable parameters for `config`.
std::int64_t parameter_count(const ModelConfig& config);

}  // namespace p5rec::model
