#include "p5rec/model/config.hpp"

#include "p5rec/common.hpp"

namespace p5rec::model {

ModelConfig ModelConfig::toy(int vocab_size) {
  ModelConfig c;
  c.vocab_size = vocab_size;
  return c;
}

ModelConfig ModelConfig::small(int vocab_size) {
  ModelConfig c;
  c.enc_layers = c.dec_layers = 6;
  c.d_model = 512;
  c.heads = 8;
  c.d_ff = 2048;
  c.vocab_size = vocab_size;
  c.max_len = c.max_whole_words = 512;
  c.dropout_rate = 0.1;
  return c;
}

ModelConfig ModelConfig::base(int vocab_size) {
  ModelConfig c;
  c.enc_layers = c.dec_layers = 12;
  c.d_model = 768;
  c.heads = 12;
  c.d_ff = 3072;
  c.vocab_size = vocab_size;
  c.max_len = c.max_whole_words = 512;
  c.dropout_rate = 0.1;
  return c;
}

ModelConfig ModelConfig::preset(const std::string& name, int vocab_size) {
  if (name == "toy") return toy(vocab_size);
  if (name == "small") return small(vocab_size);
  if (name == "base") return base(vocab_size);
  throw ModelError("unknown model preset '" + name + "'");
}

void ModelConfig::validate() const {
  if (enc_layers < 1 || dec_layers < 1) throw ModelError("model needs at least one encoder and decoder layer");
  if (d_model < 1 || heads < 1 || d_model % heads != 0) {
    throw ModelError("d_model (" + std::to_string(d_model) + ") must be divisible by heads (" +
                     std::to_string(heads) + ")");
  }
  if (d_ff < 1) throw ModelError("d_ff must be positive");
  if (vocab_size < 2) throw ModelError("vocab_size must be at least 2");
  if (max_len < 1) throw ModelError("max_len must be at least 1");
  if (max_whole_words < 1) throw ModelError("max_whole_words must be at least 1");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0) throw ModelError("dropout_rate must lie in [0, 1)");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"enc_layers", c.enc_layers},
                     {"dec_layers", c.dec_layers},
                     {"d_model", c.d_model},
                     {"heads", c.heads},
                     {"d_ff", c.d_ff},
                     {"vocab_size", c.vocab_size},
                     {"max_len", c.max_len},
                     {"max_whole_words", c.max_whole_words},
                     {"dropout_rate", c.dropout_rate},
                     {"seed", c.seed},
                     {"positional", c.positional == PositionalKind::learned ? "learned" : "sinusoidal"}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  j.at("enc_layers").get_to(c.enc_layers);
  j.at("dec_layers").get_to(c.dec_layers);
  j.at("d_model").get_to(c.d_model);
  j.at("heads").get_to(c.heads);
  j.at("d_ff").get_to(c.d_ff);
  j.at("vocab_size").get_to(c.vocab_size);
  j.at("max_len").get_to(c.max_len);
  j.at("max_whole_words").get_to(c.max_whole_words);
  j.at("dropout_rate").get_to(c.dropout_rate);
  j.at("seed").get_to(c.seed);
  c.positional = j.value("positional", "learned") == "learned" ? PositionalKind::learned : PositionalKind::sinusoidal;
}

std::int64_t parameter_count(const ModelConfig& c) {
  const std::int64_t d = c.d_model;
  const std::int64_t ff = c.d_ff;
  const std::int64_t v = c.vocab_size;
  std::int64_t n = v * d;                        // token embeddings (shared by encoder and decoder)
  if (c.positional == PositionalKind::learned) n += static_cast<std::int64_t>(c.max_len) * d;
  n += static_cast<std::int64_t>(c.max_whole_words) * d;
  const std::int64_t enc_layer = 4 * d * d + 2 * d * ff + 2 * (2 * d);
  const std::int64_t dec_layer = 8 * d * d + 2 * d * ff + 3 * (2 * d);
  n += c.enc_layers * enc_layer + c.dec_layers * dec_layer;
  n += 2 * (2 * d);  // final encoder / decoder norms
  n += d * v;        // output projection
  return n;
}

}  // namespace p5rec::model
