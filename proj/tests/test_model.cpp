#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "model/layers.hpp"
#include "p5rec/common.hpp"
#include "p5rec/model/checkpoint.hpp"
#include "p5rec/model/config.hpp"
#include "p5rec/model/transformer.hpp"
#include "p5rec/train/gradcheck.hpp"

using namespace p5rec;
using namespace p5rec::model;

namespace {

text::EncodedSequence random_source(Rng& rng, int vocab, int n) {
  text::EncodedSequence s;
  for (int i = 0; i < n - 1; ++i) {
    s.token_ids.push_back(3 + static_cast<int>(rng() % static_cast<unsigned>(vocab - 3)));
    s.whole_word_ids.push_back(1 + i / 2);
  }
  s.token_ids.push_back(text::kEosId);
  s.whole_word_ids.push_back(text::kSpecialWordId);
  return s;
}

std::vector<Example> random_batch(Rng& rng, int vocab, int count) {
  std::vector<Example> batch;
  for (int b = 0; b < count; ++b) {
    Example ex;
    ex.source = random_source(rng, vocab, 6 + b);
    for (int i = 0; i < 4; ++i) ex.target.push_back(3 + static_cast<int>(rng() % static_cast<unsigned>(vocab - 3)));
    ex.target.push_back(text::kEosId);
    batch.push_back(std::move(ex));
  }
  return batch;
}

ModelConfig tiny(int vocab) {
  ModelConfig c;
  c.enc_layers = 1;
  c.dec_layers = 1;
  c.d_model = 16;
  c.heads = 2;
  c.d_ff = 24;
  c.vocab_size = vocab;
  c.max_len = 32;
  c.max_whole_words = 32;
  return c;
}

// Counts from the shapes: embeddings, per-layer blocks, final norms, head.
std::int64_t shape_count(const ModelConfig& c) {
  const std::int64_t d = c.d_model;
  const std::int64_t ff = c.d_ff;
  const std::int64_t V = c.vocab_size;
  std::int64_t emb = V * d + c.max_whole_words * d;
  if (c.positional == PositionalKind::learned) emb += static_cast<std::int64_t>(c.max_len) * d;
  const std::int64_t norm = 2 * d;
  const std::int64_t attn = 4 * d * d;
  const std::int64_t ffn = 2 * d * ff;
  const std::int64_t enc = c.enc_layers * (2 * norm + attn + ffn);
  const std::int64_t dec = c.dec_layers * (3 * norm + 2 * attn + ffn);
  return emb + enc + dec + 2 * norm + d * V;
}

}  // namespace

TEST_CASE("encoder input is the sum of three embeddings") {
  ModelConfig c = tiny(40);
  Seq2SeqModel m(c);
  Rng rng(1);
  const auto src = random_source(rng, 40, 7);
  const Matrix e = m.embed(src);
  const auto& tok = m.parameter("embed.token").value;
  const auto& pos = m.parameter("embed.position").value;
  const auto& ww = m.parameter("embed.whole_word").value;
  for (std::size_t i = 0; i < src.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    const RowVector expect = tok.row(src.token_ids[i]) + pos.row(r) + ww.row(src.whole_word_ids[i]);
    CHECK((e.row(r) - expect).cwiseAbs().maxCoeff() < 1e-15);
  }
}

TEST_CASE("sinusoidal positions are fixed and excluded from training") {
  ModelConfig c = tiny(40);
  c.positional = PositionalKind::sinusoidal;
  Seq2SeqModel m(c);
  const auto& p = m.parameter("embed.position");
  CHECK_FALSE(p.trainable);
  CHECK(p.value(0, 0) == doctest::Approx(0.0));
  CHECK(p.value(0, 1) == doctest::Approx(1.0));
  CHECK(p.value(3, 0) == doctest::Approx(std::sin(3.0)));
  CHECK(m.trainable_parameter_count() == parameter_count(c));
}

TEST_CASE("two-token attention matches a hand computation") {
  Matrix q(2, 2), k(2, 2), v(2, 2);
  q << 1, 0, 0, 1;
  k << 1, 0, 0, 1;
  v << 1, 2, 3, 4;
  const double a = 1.0 / std::sqrt(2.0);
  const double p = std::exp(a) / (std::exp(a) + 1.0);  // weight on the matching key
  const Matrix full = detail::attention_core(q, k, v, {true, true}, false, 1, nullptr);
  CHECK(full(0, 0) == doctest::Approx(p * 1 + (1 - p) * 3).epsilon(1e-12));
  CHECK(full(0, 1) == doctest::Approx(p * 2 + (1 - p) * 4).epsilon(1e-12));
  CHECK(full(1, 0) == doctest::Approx((1 - p) * 1 + p * 3).epsilon(1e-12));
  const Matrix causal = detail::attention_core(q, k, v, {true, true}, true, 1, nullptr);
  CHECK(causal(0, 0) == doctest::Approx(1.0));
  CHECK(causal(0, 1) == doctest::Approx(2.0));
  CHECK(causal(1, 0) == doctest::Approx(full(1, 0)));
  const Matrix masked = detail::attention_core(q, k, v, {true, false}, false, 1, nullptr);
  CHECK(masked(1, 0) == doctest::Approx(1.0));
  CHECK(masked(1, 1) == doctest::Approx(2.0));
}

TEST_CASE("uniform logits give ln V per token") {
  for (int V : {2, 7, 259, 1000}) {
    const Matrix logits = Matrix::Constant(5, V, 0.37);
    const std::vector<int> targets = {1, 1, 1, 0, 1};
    const auto loss = nll_loss(logits, targets);
    CHECK(loss.tokens == 4);
    CHECK(std::abs(loss.mean() - std::log(static_cast<double>(V))) < 1e-6);
  }
}

TEST_CASE("loss agrees with an explicit log-sum-exp") {
  Rng rng(2);
  std::normal_distribution<double> n(0.0, 3.0);
  Matrix logits(4, 9);
  for (Eigen::Index i = 0; i < logits.size(); ++i) logits.data()[i] = n(rng);
  const std::vector<int> targets = {3, 8, 1, 5};
  double expect = 0.0;
  for (int r = 0; r < 4; ++r) {
    double mx = logits.row(r).maxCoeff();
    double s = 0.0;
    for (int j = 0; j < 9; ++j) s += std::exp(logits(r, j) - mx);
    expect += mx + std::log(s) - logits(r, targets[static_cast<std::size_t>(r)]);
  }
  CHECK(nll_loss(logits, targets).sum == doctest::Approx(expect).epsilon(1e-12));
  CHECK_THROWS_AS(nll_loss(logits, std::vector<int>{1, 2}), ModelError);
}

TEST_CASE("decoder rows equal step-by-step recomputation") {
  Seq2SeqModel m(tiny(30));
  Rng rng(3);
  const auto memory = m.encode(random_source(rng, 30, 6));
  const std::vector<int> prefix = {Seq2SeqModel::kDecoderStart, 5, 9, 12, 4};
  const Matrix all = m.decode_logits(prefix, memory);
  for (std::size_t j = 0; j < prefix.size(); ++j) {
    const RowVector row = m.next_logits(std::span<const int>(prefix).first(j + 1), memory);
    CHECK((all.row(static_cast<Eigen::Index>(j)) - row).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("decoder is causal") {
  Seq2SeqModel m(tiny(30));
  Rng rng(4);
  const auto memory = m.encode(random_source(rng, 30, 6));
  std::vector<int> a = {0, 5, 9, 12, 4};
  std::vector<int> b = a;
  b[3] = 20;
  b[4] = 21;
  const Matrix la = m.decode_logits(a, memory);
  const Matrix lb = m.decode_logits(b, memory);
  CHECK((la.topRows(3) - lb.topRows(3)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((la.row(3) - lb.row(3)).cwiseAbs().maxCoeff() > 1e-6);
}

TEST_CASE("padding positions do not change the output") {
  Seq2SeqModel m(tiny(30));
  Rng rng(5);
  const auto src = random_source(rng, 30, 6);
  auto padded = src;
  for (int i = 0; i < 4; ++i) {
    padded.token_ids.push_back(text::kPadId);
    padded.whole_word_ids.push_back(text::kSpecialWordId);
  }
  const auto ma = m.encode(src);
  const auto mb = m.encode(padded);
  CHECK((ma.states - mb.states.topRows(ma.states.rows())).cwiseAbs().maxCoeff() < 1e-12);
  const std::vector<int> prefix = {0, 7, 8};
  CHECK((m.decode_logits(prefix, ma) - m.decode_logits(prefix, mb)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("encoder rejects empty input") {
  Seq2SeqModel m(tiny(30));
  CHECK_THROWS_AS(m.encode(text::EncodedSequence{}), ModelError);
  text::EncodedSequence pads{{0, 0}, {0, 0}};
  CHECK_THROWS_AS(m.encode(pads), ModelError);
}

TEST_CASE("parameter count equals shape arithmetic") {
  for (auto c : {ModelConfig::toy(300), tiny(17)}) {
    Seq2SeqModel m(c);
    CHECK(m.trainable_parameter_count() == parameter_count(c));
    CHECK(parameter_count(c) == shape_count(c));
  }
  Rng rng(6);
  for (int trial = 0; trial < 5; ++trial) {
    ModelConfig c = tiny(20 + static_cast<int>(rng() % 50));
    c.enc_layers = 1 + static_cast<int>(rng() % 3);
    c.dec_layers = 1 + static_cast<int>(rng() % 3);
    c.heads = 1 + static_cast<int>(rng() % 4);
    c.d_model = 4 * c.heads;
    c.d_ff = 8 + static_cast<int>(rng() % 20);
    Seq2SeqModel m(c);
    CHECK(m.trainable_parameter_count() == shape_count(c));
  }
  // Reference sizes for these shapes are 60.75M / 223.28M; the untied
  // output head accounts for most of the gap, so only print the count.
  for (const auto* name : {"small", "base"}) {
    const auto c = ModelConfig::preset(name, 32128);
    CHECK(parameter_count(c) == shape_count(c));
    std::printf("%s preset: %.2fM parameters\n", name, static_cast<double>(parameter_count(c)) / 1e6);
  }
}

TEST_CASE("config validation and json round trip") {
  auto c = ModelConfig::toy(300);
  nlohmann::json j = c;
  CHECK(j.get<ModelConfig>() == c);
  c.heads = 5;
  CHECK_THROWS_AS(c.validate(), ModelError);
  CHECK_THROWS_AS(ModelConfig::preset("huge", 10), ModelError);
}

TEST_CASE("analytic gradients match central differences") {
  Seq2SeqModel m(tiny(40));
  Rng rng(7);
  const auto batch = random_batch(rng, 40, 2);
  const auto res = train::finite_difference_audit(m, batch, 1e-4, 8, 3);
  CHECK(res.max_rel_error < 1e-4);
  CHECK(res.groups.size() == m.parameters().size());
}

TEST_CASE("central difference error shrinks quadratically") {
  Seq2SeqModel m(tiny(40));
  Rng rng(8);
  const auto batch = random_batch(rng, 40, 1);
  auto grads = m.make_gradients();
  for (const auto& ex : batch) m.forward_backward(ex, grads);
  const std::size_t idx = [&] {
    for (std::size_t i = 0; i < m.parameters().size(); ++i) {
      if (m.parameters()[i].name == "decoder.0.ff.w1") return i;
    }
    return std::size_t{0};
  }();
  const auto& g = grads.tensors[idx];
  Eigen::Index entry = 0;
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    if (std::abs(g.data()[i]) > std::abs(g.data()[entry])) entry = i;
  }
  const double analytic = grads.tensors[idx].data()[entry];
  const double e1 = std::abs(train::central_difference(m, batch, idx, entry, 1e-1) - analytic);
  const double e2 = std::abs(train::central_difference(m, batch, idx, entry, 5e-2) - analytic);
  const double ratio = e1 / e2;
  CHECK(ratio > 3.0);
  CHECK(ratio < 5.0);
}

TEST_CASE("dropout only acts in training mode") {
  ModelConfig c = tiny(30);
  c.dropout_rate = 0.3;
  Seq2SeqModel m(c);
  Rng rng(9);
  const auto batch = random_batch(rng, 30, 1);
  auto g1 = m.make_gradients();
  auto g2 = m.make_gradients();
  const double inference = m.forward_backward(batch[0], g1).sum;
  CHECK(inference == doctest::Approx(m.loss(batch[0]).sum).epsilon(1e-12));
  Rng drop(1);
  const double training = m.forward_backward(batch[0], g2, 1.0, Mode::training, &drop).sum;
  CHECK(std::abs(training - inference) > 1e-9);
}

TEST_CASE("checkpoints round-trip and check the vocabulary hash") {
  Seq2SeqModel m(tiny(30));
  const auto path = std::filesystem::temp_directory_path() / "p5rec_model_test.ckpt";
  save_checkpoint(path, m, 0xabcdef, 42);
  const auto loaded = load_checkpoint(path, 0xabcdef);
  CHECK(loaded.step == 42);
  CHECK(loaded.model.config() == m.config());
  for (std::size_t i = 0; i < m.parameters().size(); ++i) {
    CHECK(loaded.model.parameters()[i].value == m.parameters()[i].value);
  }
  CHECK_THROWS_AS(load_checkpoint(path, 0x1234), ModelError);
  CHECK(load_checkpoint_unchecked(path).vocab_hash == 0xabcdef);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_checkpoint(path, 0), ModelError);
}

TEST_CASE("copies are independent") {
  Seq2SeqModel a(tiny(30));
  Seq2SeqModel b = a;
  b.parameters()[0].value(0, 0) += 1.0;
  CHECK(a.parameters()[0].value(0, 0) != b.parameters()[0].value(0, 0));
}
