#include "p5rec/model/transformer.hpp"

#include <cmath>
#include <random>

#include "layers.hpp"

namespace p5rec::model {

using detail::AttentionCache;
using detail::FeedForwardCache;
using detail::NormCache;

namespace {

struct AttnIdx {
  int q, k, v, o;
};
struct NormIdx {
  int gain, bias;
};
struct FfIdx {
  int w1, w2;
};
struct EncLayerIdx {
  NormIdx ln1;
  AttnIdx attn;
  NormIdx ln2;
  FfIdx ff;
};
struct DecLayerIdx {
  NormIdx ln1;
  AttnIdx self;
  NormIdx ln2;
  AttnIdx cross;
  NormIdx ln3;
  FfIdx ff;
};

struct EncLayerCache {
  NormCache ln1;
  AttentionCache attn;
  Matrix attn_in;
  Matrix drop1;
  NormCache ln2;
  FeedForwardCache ff;
  Matrix drop2;
};

struct DecLayerCache {
  NormCache ln1;
  AttentionCache self;
  Matrix self_in;
  Matrix drop1;
  NormCache ln2;
  AttentionCache cross;
  Matrix cross_in;
  Matrix drop2;
  NormCache ln3;
  FeedForwardCache ff;
  Matrix drop3;
};

struct EncoderCache {
  Matrix embed_drop;
  std::vector<EncLayerCache> layers;
  NormCache final_norm;
};

struct DecoderCache {
  Matrix embed_drop;
  std::vector<DecLayerCache> layers;
  NormCache final_norm;
  Matrix normed;
};

}  // namespace

struct Seq2SeqModel::Layout {
  int tok = -1, pos = -1, ww = -1;
  std::vector<EncLayerIdx> enc;
  NormIdx enc_norm{};
  std::vector<DecLayerIdx> dec;
  NormIdx dec_norm{};
  int lm_head = -1;
};

// --- Gradients ------------------------------------------------------------

void Gradients::zero() {
  for (auto& t : tensors) t.setZero();
}

double Gradients::squared_norm() const {
  double s = 0.0;
  for (const auto& t : tensors) s += t.squaredNorm();
  return s;
}

void Gradients::scale(double factor) {
  for (auto& t : tensors) t *= factor;
}

// --- construction ---------------------------------------------------------

Seq2SeqModel::Seq2SeqModel(const ModelConfig& config) : config_(config), layout_(std::make_unique<Layout>()) {
  config_.validate();
  build_layout();
  init_parameters();
}

Seq2SeqModel::~Seq2SeqModel() = default;
Seq2SeqModel::Seq2SeqModel(Seq2SeqModel&&) noexcept = default;
Seq2SeqModel& Seq2SeqModel::operator=(Seq2SeqModel&&) noexcept = default;

Seq2SeqModel::Seq2SeqModel(const Seq2SeqModel& other)
    : config_(other.config_), params_(other.params_), layout_(std::make_unique<Layout>(*other.layout_)) {}

Seq2SeqModel& Seq2SeqModel::operator=(const Seq2SeqModel& other) {
  if (this != &other) {
    config_ = other.config_;
    params_ = other.params_;
    layout_ = std::make_unique<Layout>(*other.layout_);
  }
  return *this;
}

void Seq2SeqModel::build_layout() {
  const int d = config_.d_model;
  auto add = [&](std::string name, int rows, int cols, bool trainable = true) {
    params_.push_back({std::move(name), Matrix::Zero(rows, cols), trainable});
    return static_cast<int>(params_.size() - 1);
  };
  auto norm = [&](const std::string& prefix) {
    return NormIdx{add(prefix + ".gain", 1, d), add(prefix + ".bias", 1, d)};
  };
  auto attn = [&](const std::string& prefix) {
    return AttnIdx{add(prefix + ".wq", d, d), add(prefix + ".wk", d, d), add(prefix + ".wv", d, d),
                   add(prefix + ".wo", d, d)};
  };
  auto ff = [&](const std::string& prefix) {
    return FfIdx{add(prefix + ".w1", d, config_.d_ff), add(prefix + ".w2", config_.d_ff, d)};
  };

  auto& L = *layout_;
  L.tok = add("embed.token", config_.vocab_size, d);
  L.pos = add("embed.position", config_.max_len, d, config_.positional == PositionalKind::learned);
  L.ww = add("embed.whole_word", config_.max_whole_words, d);
  for (int i = 0; i < config_.enc_layers; ++i) {
    const std::string p = "encoder." + std::to_string(i);
    EncLayerIdx e{};
    e.ln1 = norm(p + ".norm1");
    e.attn = attn(p + ".self_attn");
    e.ln2 = norm(p + ".norm2");
    e.ff = ff(p + ".ff");
    L.enc.push_back(e);
  }
  L.enc_norm = norm("encoder.final_norm");
  for (int i = 0; i < config_.dec_layers; ++i) {
    const std::string p = "decoder." + std::to_string(i);
    DecLayerIdx e{};
    e.ln1 = norm(p + ".norm1");
    e.self = attn(p + ".self_attn");
    e.ln2 = norm(p + ".norm2");
    e.cross = attn(p + ".cross_attn");
    e.ln3 = norm(p + ".norm3");
    e.ff = ff(p + ".ff");
    L.dec.push_back(e);
  }
  L.dec_norm = norm("decoder.final_norm");
  L.lm_head = add("lm_head", d, config_.vocab_size);
}

void Seq2SeqModel::init_parameters() {
  Rng rng(config_.seed);
  const double d = config_.d_model;
  const double residual_scale = 1.0 / std::sqrt(2.0 * (config_.enc_layers + config_.dec_layers));
  for (auto& p : params_) {
    const auto& n = p.name;
    if (n.ends_with(".gain")) {
      p.value.setOnes();
      continue;
    }
    if (n.ends_with(".bias")) continue;
    if (n == "embed.position" && config_.positional == PositionalKind::sinusoidal) {
      for (Eigen::Index i = 0; i < p.value.rows(); ++i) {
        for (Eigen::Index j = 0; j < p.value.cols(); ++j) {
          const double rate = std::pow(10000.0, -static_cast<double>(2 * (j / 2)) / d);
          p.value(i, j) = (j % 2 == 0) ? std::sin(i * rate) : std::cos(i * rate);
        }
      }
      continue;
    }
    double stddev = 1.0 / std::sqrt(static_cast<double>(p.value.rows()));
    if (n.starts_with("embed.")) stddev = 1.0 / std::sqrt(d);
    if (n.ends_with(".wo") || n.ends_with(".w2")) stddev *= residual_scale;
    std::normal_distribution<double> dist(0.0, stddev);
    for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = dist(rng);
  }
}

Parameter& Seq2SeqModel::parameter(const std::string& name) {
  for (auto& p : params_) {
    if (p.name == name) return p;
  }
  throw ModelError("no parameter named '" + name + "'");
}

const Parameter& Seq2SeqModel::parameter(const std::string& name) const {
  return const_cast<Seq2SeqModel*>(this)->parameter(name);
}

Gradients Seq2SeqModel::make_gradients() const {
  Gradients g;
  g.tensors.reserve(params_.size());
  for (const auto& p : params_) g.tensors.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
  return g;
}

std::int64_t Seq2SeqModel::trainable_parameter_count() const {
  std::int64_t n = 0;
  for (const auto& p : params_) {
    if (p.trainable) n += p.value.size();
  }
  return n;
}

// --- forward --------------------------------------------------------------

namespace {

struct Forward {
  const ModelConfig& cfg;
  const std::vector<Parameter>& P;
  const Seq2SeqModel::Layout& L;
  double drop_rate;
  Rng* rng;

  const Matrix& w(int idx) const { return P[static_cast<std::size_t>(idx)].value; }

  Matrix norm(const Matrix& x, NormIdx idx, NormCache* c) const {
    return detail::layer_norm(x, w(idx.gain), w(idx.bias), c);
  }

  Matrix drop(const Matrix& x, Matrix* mask) const { return detail::dropout(x, drop_rate, rng, mask); }

  Matrix embed(const text::EncodedSequence& seq) const {
    const auto n = static_cast<Eigen::Index>(seq.size());
    if (n == 0) throw ModelError("cannot encode an empty sequence");
    if (n > cfg.max_len) throw ModelError("sequence length " + std::to_string(n) + " exceeds max_len");
    if (seq.whole_word_ids.size() != seq.token_ids.size()) throw ModelError("whole-word ids misaligned with tokens");
    Matrix x(n, cfg.d_model);
    for (Eigen::Index i = 0; i < n; ++i) {
      const int tok = seq.token_ids[static_cast<std::size_t>(i)];
      const int ww = seq.whole_word_ids[static_cast<std::size_t>(i)];
      if (tok < 0 || tok >= cfg.vocab_size) throw ModelError("token id " + std::to_string(tok) + " out of range");
      if (ww < 0 || ww >= cfg.max_whole_words) {
        throw ModelError("whole-word id " + std::to_string(ww) + " out of range");
      }
      x.row(i) = w(L.tok).row(tok) + w(L.pos).row(i) + w(L.ww).row(ww);
    }
    return x;
  }

  EncoderOutput encode(const text::EncodedSequence& seq, EncoderCache* cache) const {
    EncoderOutput out;
    out.key_valid.resize(seq.size());
    bool any = false;
    for (std::size_t i = 0; i < seq.size(); ++i) {
      out.key_valid[i] = seq.token_ids[i] != text::kPadId;
      any = any || out.key_valid[i];
    }
    Matrix x = embed(seq);
    if (!any) throw ModelError("sequence has no non-padding positions");
    x = drop(x, cache ? &cache->embed_drop : nullptr);
    if (cache) cache->layers.resize(L.enc.size());
    for (std::size_t l = 0; l < L.enc.size(); ++l) {
      const auto& idx = L.enc[l];
      EncLayerCache* c = cache ? &cache->layers[l] : nullptr;
      Matrix h = norm(x, idx.ln1, c ? &c->ln1 : nullptr);
      Matrix q = h * w(idx.attn.q);
      Matrix k = h * w(idx.attn.k);
      Matrix v = h * w(idx.attn.v);
      std::vector<Matrix> probs;
      Matrix concat = detail::attention_core(q, k, v, out.key_valid, false, cfg.heads, c ? &probs : nullptr);
      Matrix a = drop(concat * w(idx.attn.o), c ? &c->drop1 : nullptr);
      if (c) {
        c->attn_in = std::move(h);
        c->attn = {std::move(q), std::move(k), std::move(v), std::move(probs), std::move(concat)};
      }
      x += a;
      Matrix h2 = norm(x, idx.ln2, c ? &c->ln2 : nullptr);
      Matrix f = detail::feed_forward(h2, w(idx.ff.w1), w(idx.ff.w2), c ? &c->ff : nullptr);
      x += drop(f, c ? &c->drop2 : nullptr);
    }
    out.states = norm(x, L.enc_norm, cache ? &cache->final_norm : nullptr);
    for (const auto& idx : L.dec) {
      out.cross_keys.push_back(out.states * w(idx.cross.k));
      out.cross_values.push_back(out.states * w(idx.cross.v));
    }
    return out;
  }

  /// Returns the normed decoder states (m x d).
  Matrix decode(std::span<const int> prefix, const EncoderOutput& mem, DecoderCache* cache) const {
    const auto m = static_cast<Eigen::Index>(prefix.size());
    if (mem.states.rows() == 0) throw ModelError("empty encoder output");
    if (m == 0) throw ModelError("decoder prefix is empty");
    if (m > cfg.max_len) throw ModelError("decoder prefix exceeds max_len");
    Matrix y(m, cfg.d_model);
    for (Eigen::Index i = 0; i < m; ++i) {
      const int tok = prefix[static_cast<std::size_t>(i)];
      if (tok < 0 || tok >= cfg.vocab_size) throw ModelError("token id " + std::to_string(tok) + " out of range");
      y.row(i) = w(L.tok).row(tok) + w(L.pos).row(i);
    }
    y = drop(y, cache ? &cache->embed_drop : nullptr);
    const std::vector<bool> self_valid(static_cast<std::size_t>(m), true);
    if (cache) cache->layers.resize(L.dec.size());
    for (std::size_t l = 0; l < L.dec.size(); ++l) {
      const auto& idx = L.dec[l];
      DecLayerCache* c = cache ? &cache->layers[l] : nullptr;

      Matrix h = norm(y, idx.ln1, c ? &c->ln1 : nullptr);
      Matrix q = h * w(idx.self.q);
      Matrix k = h * w(idx.self.k);
      Matrix v = h * w(idx.self.v);
      std::vector<Matrix> probs;
      Matrix concat = detail::attention_core(q, k, v, self_valid, true, cfg.heads, c ? &probs : nullptr);
      y += drop(concat * w(idx.self.o), c ? &c->drop1 : nullptr);
      if (c) {
        c->self_in = std::move(h);
        c->self = {std::move(q), std::move(k), std::move(v), std::move(probs), std::move(concat)};
      }

      Matrix h2 = norm(y, idx.ln2, c ? &c->ln2 : nullptr);
      Matrix q2 = h2 * w(idx.cross.q);
      std::vector<Matrix> probs2;
      Matrix concat2 = detail::attention_core(q2, mem.cross_keys[l], mem.cross_values[l], mem.key_valid, false,
                                              cfg.heads, c ? &probs2 : nullptr);
      y += drop(concat2 * w(idx.cross.o), c ? &c->drop2 : nullptr);
      if (c) {
        c->cross_in = std::move(h2);
        c->cross.q = std::move(q2);
        c->cross.probs = std::move(probs2);
        c->cross.concat = std::move(concat2);
      }

      Matrix h3 = norm(y, idx.ln3, c ? &c->ln3 : nullptr);
      Matrix f = detail::feed_forward(h3, w(idx.ff.w1), w(idx.ff.w2), c ? &c->ff : nullptr);
      y += drop(f, c ? &c->drop3 : nullptr);
    }
    Matrix z = norm(y, L.dec_norm, cache ? &cache->final_norm : nullptr);
    if (cache) cache->normed = z;
    return z;
  }
};

void apply_mask(Matrix& g, const Matrix& mask) {
  if (mask.size() > 0) g = g.cwiseProduct(mask);
}

}  // namespace

Matrix Seq2SeqModel::embed(const text::EncodedSequence& seq) const {
  Forward fw{config_, params_, *layout_, 0.0, nullptr};
  return fw.embed(seq);
}

EncoderOutput Seq2SeqModel::encode(const text::EncodedSequence& seq) const {
  Forward fw{config_, params_, *layout_, 0.0, nullptr};
  return fw.encode(seq, nullptr);
}

Matrix Seq2SeqModel::decode_logits(std::span<const int> prefix, const EncoderOutput& memory) const {
  Forward fw{config_, params_, *layout_, 0.0, nullptr};
  Matrix z = fw.decode(prefix, memory, nullptr);
  return z * params_[static_cast<std::size_t>(layout_->lm_head)].value;
}

RowVector Seq2SeqModel::next_logits(std::span<const int> prefix, const EncoderOutput& memory) const {
  Forward fw{config_, params_, *layout_, 0.0, nullptr};
  Matrix z = fw.decode(prefix, memory, nullptr);
  return z.row(z.rows() - 1) * params_[static_cast<std::size_t>(layout_->lm_head)].value;
}

LossValue Seq2SeqModel::loss(const Example& example) const {
  auto memory = encode(example.source);
  auto input = shift_right(example.target);
  return nll_loss(decode_logits(input, memory), example.target);
}

// --- backward -------------------------------------------------------------

LossValue Seq2SeqModel::forward_backward(const Example& example, Gradients& grads, double grad_scale, Mode mode,
                                         Rng* rng) const {
  const bool training = mode == Mode::training;
  Forward fw{config_, params_, *layout_, training ? config_.dropout_rate : 0.0, training ? rng : nullptr};
  const auto& L = *layout_;
  auto W = [&](int idx) -> const Matrix& { return params_[static_cast<std::size_t>(idx)].value; };
  auto G = [&](int idx) -> Matrix& { return grads.tensors[static_cast<std::size_t>(idx)]; };

  EncoderCache enc_cache;
  EncoderOutput memory = fw.encode(example.source, &enc_cache);
  const auto input = shift_right(example.target);
  DecoderCache dec_cache;
  Matrix z = fw.decode(input, memory, &dec_cache);
  Matrix logits = z * W(L.lm_head);

  // d(sum NLL)/d(logits) = softmax - onehot
  LossValue loss;
  Matrix dlogits = log_softmax_rows(logits);
  for (Eigen::Index j = 0; j < dlogits.rows(); ++j) {
    const int y = example.target[static_cast<std::size_t>(j)];
    if (y < 0 || y >= config_.vocab_size) throw ModelError("target id " + std::to_string(y) + " out of range");
    if (y == text::kPadId) {
      dlogits.row(j).setZero();
      continue;
    }
    loss.sum -= dlogits(j, y);
    ++loss.tokens;
    dlogits.row(j) = dlogits.row(j).array().exp();
    dlogits(j, y) -= 1.0;
  }
  dlogits *= grad_scale;

  G(L.lm_head).noalias() += dec_cache.normed.transpose() * dlogits;
  Matrix dy = dlogits * W(L.lm_head).transpose();
  dy = detail::layer_norm_backward(dy, dec_cache.final_norm, W(L.dec_norm.gain), &G(L.dec_norm.gain),
                                   &G(L.dec_norm.bias));

  Matrix dstates = Matrix::Zero(memory.states.rows(), memory.states.cols());
  for (std::size_t li = L.dec.size(); li-- > 0;) {
    const auto& idx = L.dec[li];
    auto& c = dec_cache.layers[li];

    // feed-forward branch
    Matrix g = dy;
    apply_mask(g, c.drop3);
    g = detail::feed_forward_backward(g, c.ff, W(idx.ff.w1), W(idx.ff.w2), &G(idx.ff.w1), &G(idx.ff.w2));
    dy += detail::layer_norm_backward(g, c.ln3, W(idx.ln3.gain), &G(idx.ln3.gain), &G(idx.ln3.bias));

    // cross-attention branch
    g = dy;
    apply_mask(g, c.drop2);
    G(idx.cross.o).noalias() += c.cross.concat.transpose() * g;
    Matrix dconcat = g * W(idx.cross.o).transpose();
    Matrix dq, dk, dv;
    detail::attention_core_backward(dconcat, c.cross.q, memory.cross_keys[li], memory.cross_values[li],
                                    c.cross.probs, config_.heads, dq, dk, dv);
    G(idx.cross.q).noalias() += c.cross_in.transpose() * dq;
    G(idx.cross.k).noalias() += memory.states.transpose() * dk;
    G(idx.cross.v).noalias() += memory.states.transpose() * dv;
    dstates.noalias() += dk * W(idx.cross.k).transpose();
    dstates.noalias() += dv * W(idx.cross.v).transpose();
    Matrix dh = dq * W(idx.cross.q).transpose();
    dy += detail::layer_norm_backward(dh, c.ln2, W(idx.ln2.gain), &G(idx.ln2.gain), &G(idx.ln2.bias));

    // causal self-attention branch
    g = dy;
    apply_mask(g, c.drop1);
    G(idx.self.o).noalias() += c.self.concat.transpose() * g;
    dconcat = g * W(idx.self.o).transpose();
    detail::attention_core_backward(dconcat, c.self.q, c.self.k, c.self.v, c.self.probs, config_.heads, dq, dk, dv);
    G(idx.self.q).noalias() += c.self_in.transpose() * dq;
    G(idx.self.k).noalias() += c.self_in.transpose() * dk;
    G(idx.self.v).noalias() += c.self_in.transpose() * dv;
    dh = dq * W(idx.self.q).transpose();
    dh.noalias() += dk * W(idx.self.k).transpose();
    dh.noalias() += dv * W(idx.self.v).transpose();
    dy += detail::layer_norm_backward(dh, c.ln1, W(idx.ln1.gain), &G(idx.ln1.gain), &G(idx.ln1.bias));
  }
  apply_mask(dy, dec_cache.embed_drop);
  for (std::size_t i = 0; i < input.size(); ++i) {
    G(L.tok).row(input[i]) += dy.row(static_cast<Eigen::Index>(i));
    if (params_[static_cast<std::size_t>(L.pos)].trainable) G(L.pos).row(static_cast<Eigen::Index>(i)) += dy.row(static_cast<Eigen::Index>(i));
  }

  // encoder
  Matrix dx = detail::layer_norm_backward(dstates, enc_cache.final_norm, W(L.enc_norm.gain), &G(L.enc_norm.gain),
                                          &G(L.enc_norm.bias));
  for (std::size_t li = L.enc.size(); li-- > 0;) {
    const auto& idx = L.enc[li];
    auto& c = enc_cache.layers[li];

    Matrix g = dx;
    apply_mask(g, c.drop2);
    g = detail::feed_forward_backward(g, c.ff, W(idx.ff.w1), W(idx.ff.w2), &G(idx.ff.w1), &G(idx.ff.w2));
    dx += detail::layer_norm_backward(g, c.ln2, W(idx.ln2.gain), &G(idx.ln2.gain), &G(idx.ln2.bias));

    g = dx;
    apply_mask(g, c.drop1);
    G(idx.attn.o).noalias() += c.attn.concat.transpose() * g;
    Matrix dconcat = g * W(idx.attn.o).transpose();
    Matrix dq, dk, dv;
    detail::attention_core_backward(dconcat, c.attn.q, c.attn.k, c.attn.v, c.attn.probs, config_.heads, dq, dk, dv);
    G(idx.attn.q).noalias() += c.attn_in.transpose() * dq;
    G(idx.attn.k).noalias() += c.attn_in.transpose() * dk;
    G(idx.attn.v).noalias() += c.attn_in.transpose() * dv;
    Matrix dh = dq * W(idx.attn.q).transpose();
    dh.noalias() += dk * W(idx.attn.k).transpose();
    dh.noalias() += dv * W(idx.attn.v).transpose();
    dx += detail::layer_norm_backward(dh, c.ln1, W(idx.ln1.gain), &G(idx.ln1.gain), &G(idx.ln1.bias));
  }
  apply_mask(dx, enc_cache.embed_drop);
  const auto& src = example.source;
  for (std::size_t i = 0; i < src.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    G(L.tok).row(src.token_ids[i]) += dx.row(r);
    if (params_[static_cast<std::size_t>(L.pos)].trainable) G(L.pos).row(r) += dx.row(r);
    G(L.ww).row(src.whole_word_ids[i]) += dx.row(r);
  }
  return loss;
}

// --- free functions -------------------------------------------------------

std::vector<int> shift_right(std::span<const int> target) {
  std::vector<int> out;
  out.reserve(target.size());
  out.push_back(Seq2SeqModel::kDecoderStart);
  for (std::size_t i = 0; i + 1 < target.size(); ++i) out.push_back(target[i]);
  return out;
}

Matrix log_softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double mx = logits.row(i).maxCoeff();
    const double lse = mx + std::log((logits.row(i).array() - mx).exp().sum());
    out.row(i) = logits.row(i).array() - lse;
  }
  return out;
}

LossValue nll_loss(const Matrix& logits, std::span<const int> targets) {
  if (static_cast<std::size_t>(logits.rows()) != targets.size()) {
    throw ModelError("logits rows and target length disagree");
  }
  Matrix logp = log_softmax_rows(logits);
  LossValue loss;
  for (std::size_t j = 0; j < targets.size(); ++j) {
    const int y = targets[j];
    if (y < 0 || y >= logits.cols()) throw ModelError("target id " + std::to_string(y) + " out of range");
    if (y == text::kPadId) continue;
    loss.sum -= logp(static_cast<Eigen::Index>(j), y);
    ++loss.tokens;
  }
  return loss;
}

}  // namespace p5rec::model
