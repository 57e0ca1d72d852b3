#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "doctest.h"
#include "p5rec/common.hpp"
#include "p5rec/decode/search.hpp"
#include "p5rec/model/checkpoint.hpp"
#include "p5rec/train/trainer.hpp"

using namespace p5rec;
using namespace p5rec::train;

namespace {

model::ModelConfig tiny(int vocab) {
  model::ModelConfig c;
  c.enc_layers = 1;
  c.dec_layers = 1;
  c.d_model = 16;
  c.heads = 2;
  c.d_ff = 32;
  c.vocab_size = vocab;
  c.max_len = 32;
  c.max_whole_words = 32;
  return c;
}

std::vector<model::Example> toy_examples(const text::Vocab& vocab) {
  std::vector<TextPair> pairs = {{"one plus one", "two"},     {"two plus one", "three"}, {"one plus two", "three"},
                                 {"two plus two", "four"},    {"three plus one", "four"}, {"one plus three", "four"}};
  return encode_pairs(pairs, vocab, 32);
}

bool same_parameters(const model::Seq2SeqModel& a, const model::Seq2SeqModel& b) {
  for (std::size_t i = 0; i < a.parameters().size(); ++i) {
    if (a.parameters()[i].value != b.parameters()[i].value) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("warmup then linear decay") {
  TrainConfig c;
  c.peak_lr = 1.0;
  c.warmup_fraction = 0.1;
  CHECK(lr_at(0, 100, c) == 0.0);
  CHECK(lr_at(5, 100, c) == doctest::Approx(0.5));
  CHECK(lr_at(10, 100, c) == doctest::Approx(1.0));
  CHECK(lr_at(55, 100, c) == doctest::Approx(0.5));
  CHECK(lr_at(100, 100, c) == doctest::Approx(0.0));
  for (int s = 1; s <= 10; ++s) CHECK(lr_at(s, 100, c) > lr_at(s - 1, 100, c));
  for (int s = 11; s <= 100; ++s) CHECK(lr_at(s, 100, c) < lr_at(s - 1, 100, c));
  CHECK_THROWS_AS(lr_at(101, 100, c), TrainingError);
  CHECK_THROWS_AS(lr_at(0, 0, c), TrainingError);
}

TEST_CASE("config validation") {
  TrainConfig c;
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), TrainingError);
  c = TrainConfig{};
  c.warmup_fraction = 0.0;
  CHECK_THROWS_AS(c.validate(), TrainingError);
  c = TrainConfig{};
  c.peak_lr = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(c.validate(), TrainingError);
}

TEST_CASE("zero learning rate leaves parameters unchanged") {
  const auto vocab = text::Vocab::byte_level();
  model::Seq2SeqModel m(tiny(vocab.size()));
  const auto before = m;
  TrainConfig c;
  c.peak_lr = 0.0;
  c.epochs = 2;
  c.batch_size = 2;
  train::train(toy_examples(vocab), m, c);
  CHECK(same_parameters(before, m));
}

TEST_CASE("weight decay is decoupled from the gradient") {
  const auto vocab = text::Vocab::byte_level();
  model::Seq2SeqModel m(tiny(vocab.size()));
  const auto before = m;
  TrainConfig c;
  c.weight_decay = 0.1;
  AdamW opt(m, c);
  auto zero = m.make_gradients();
  opt.step(m, zero, 0.5);
  for (std::size_t i = 0; i < m.parameters().size(); ++i) {
    const auto& p = m.parameters()[i];
    const auto& q = before.parameters()[i];
    if (!p.trainable) continue;
    const bool norm = p.name.ends_with(".gain") || p.name.ends_with(".bias");
    const double factor = norm ? 1.0 : 1.0 - 0.5 * 0.1;
    CHECK((p.value - factor * q.value).cwiseAbs().maxCoeff() < 1e-15);
  }
}

TEST_CASE("first Adam step moves each entry by lr against the gradient sign") {
  const auto vocab = text::Vocab::byte_level();
  model::Seq2SeqModel m(tiny(vocab.size()));
  const auto before = m;
  TrainConfig c;
  c.weight_decay = 0.0;
  AdamW opt(m, c);
  auto g = m.make_gradients();
  g.tensors.back().setConstant(2.0);
  opt.step(m, g, 0.01);
  const auto diff = (m.parameters().back().value - before.parameters().back().value).eval();
  CHECK(diff.maxCoeff() == doctest::Approx(-0.01).epsilon(1e-6));
  CHECK(diff.minCoeff() == doctest::Approx(-0.01).epsilon(1e-6));
}

TEST_CASE("training is deterministic for a seed") {
  const auto vocab = text::Vocab::byte_level();
  TrainConfig c;
  c.epochs = 3;
  c.batch_size = 2;
  c.seed = 11;
  model::ModelConfig mc = tiny(vocab.size());
  mc.dropout_rate = 0.1;
  model::Seq2SeqModel a(mc);
  model::Seq2SeqModel b(mc);
  const auto ra = train::train(toy_examples(vocab), a, c);
  const auto rb = train::train(toy_examples(vocab), b, c);
  CHECK(same_parameters(a, b));
  REQUIRE(ra.steps.size() == rb.steps.size());
  for (std::size_t i = 0; i < ra.steps.size(); ++i) CHECK(ra.steps[i].loss == rb.steps[i].loss);
  model::Seq2SeqModel d(mc);
  c.seed = 12;
  train::train(toy_examples(vocab), d, c);
  CHECK_FALSE(same_parameters(a, d));
}

TEST_CASE("a small set is memorized") {
  const auto vocab = text::train_subword_vocab({"one plus one two plus three four"}, 280);
  model::ModelConfig mc = tiny(vocab.size());
  mc.d_model = 32;
  mc.d_ff = 64;
  model::Seq2SeqModel m(mc);
  const auto examples = toy_examples(vocab);
  TrainConfig c;
  c.epochs = 150;
  c.batch_size = 6;
  c.peak_lr = 3e-3;
  c.weight_decay = 0.0;
  const auto report = train::train(examples, m, c);
  CHECK(report.epoch_losses.back() < 0.05);
  CHECK(report.epoch_losses.back() < report.epoch_losses.front());
  for (const auto& ex : examples) {
    auto out = decode::greedy_decode(m, ex.source, 8);
    CHECK(out == ex.target);
  }
}

TEST_CASE("max_steps bounds the run") {
  const auto vocab = text::Vocab::byte_level();
  model::Seq2SeqModel m(tiny(vocab.size()));
  TrainConfig c;
  c.epochs = 100;
  c.max_steps = 5;
  c.batch_size = 4;
  const auto r = train::train(toy_examples(vocab), m, c);
  CHECK(r.steps.size() == 5);
  CHECK(r.steps.back().lr > 0.0);
}

TEST_CASE("checkpoints, markers and the step log are written") {
  const auto vocab = text::Vocab::byte_level();
  model::Seq2SeqModel m(tiny(vocab.size()));
  const auto dir = std::filesystem::temp_directory_path() / "p5rec_trainer_test";
  std::filesystem::remove_all(dir);
  TrainConfig c;
  c.epochs = 2;
  c.batch_size = 3;
  TrainOptions o;
  o.checkpoint_dir = dir;
  o.vocab_hash = vocab.hash();
  int epochs_seen = 0;
  o.on_epoch = [&](int) { ++epochs_seen; };
  const auto r = train::train(toy_examples(vocab), m, c, o);
  CHECK(epochs_seen == 2);
  CHECK(r.checkpoint_id == "step-4.ckpt");
  CHECK(std::filesystem::exists(dir / "step-2.ckpt"));
  CHECK(std::filesystem::exists(dir / "best"));
  std::ifstream latest(dir / "latest");
  std::string id;
  latest >> id;
  CHECK(id == "step-4.ckpt");
  const auto loaded = model::load_checkpoint(dir / id, vocab.hash());
  CHECK(loaded.step == 4);
  std::ifstream log(dir / "train_log.jsonl");
  int lines = 0;
  for (std::string line; std::getline(log, line);) ++lines;
  CHECK(lines == 4);
  std::filesystem::remove_all(dir);
}

TEST_CASE("non-finite loss stops training with a diagnostic") {
  const auto vocab = text::Vocab::byte_level();
  model::Seq2SeqModel m(tiny(vocab.size()));
  m.parameter("lm_head").value(0, 5) = std::numeric_limits<double>::infinity();
  TrainConfig c;
  c.epochs = 1;
  try {
    train::train(toy_examples(vocab), m, c);
    FAIL("expected a TrainingError");
  } catch (const TrainingError& e) {
    CHECK(std::string(e.what()).find("step 0") != std::string::npos);
    CHECK(std::string(e.what()).find("fingerprint") != std::string::npos);
  }
  CHECK_THROWS_AS(train::train(std::span<const model::Example>{}, m, c), TrainingError);
}
