#include "p5rec/train/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <numeric>
#include <set>

namespace p5rec::train {

double batch_loss(const model::Seq2SeqModel& model, std::span<const model::Example> batch) {
  double total = 0.0;
  for (const auto& ex : batch) total += model.loss(ex).sum;
  return total;
}

double central_difference(model::Seq2SeqModel& model, std::span<const model::Example> batch, std::size_t param,
                          Eigen::Index entry, double epsilon) {
  double& theta = model.parameters().at(param).value.data()[entry];
  const double original = theta;
  if (!(epsilon > 0.0) || original + epsilon == original || original - epsilon == original) {
    throw TrainingError("finite-difference epsilon " + std::to_string(epsilon) + " underflows the parameter");
  }
  theta = original + epsilon;
  const double plus = batch_loss(model, batch);
  theta = original - epsilon;
  const double minus = batch_loss(model, batch);
  theta = original;
  return (plus - minus) / (2.0 * epsilon);
}

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

AuditResult finite_difference_audit(model::Seq2SeqModel& model, std::span<const model::Example> batch,
                                    double epsilon, int samples_per_group, std::uint64_t seed) {
  if (batch.empty()) throw TrainingError("gradient audit needs a non-empty batch");
  if (!(epsilon > 0.0) || 1.0 + epsilon == 1.0) throw TrainingError("finite-difference epsilon underflows");
  const double base = batch_loss(model, batch);
  if (!(base > 1e-12)) throw TrainingError("gradient audit batch has (near) zero loss; differences are degenerate");

  auto grads = model.make_gradients();
  for (const auto& ex : batch) model.forward_backward(ex, grads, 1.0, model::Mode::inference, nullptr);

  // embedding rows referenced by the batch
  std::set<int> token_rows;
  std::set<int> ww_rows;
  int max_positions = 0;
  for (const auto& ex : batch) {
    token_rows.insert(ex.source.token_ids.begin(), ex.source.token_ids.end());
    ww_rows.insert(ex.source.whole_word_ids.begin(), ex.source.whole_word_ids.end());
    for (int t : model::shift_right(ex.target)) token_rows.insert(t);
    max_positions = std::max({max_positions, static_cast<int>(ex.source.size()), static_cast<int>(ex.target.size())});
  }

  Rng rng(seed);
  AuditResult result;
  auto& params = model.parameters();
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    if (!params[pi].trainable) continue;
    const auto& p = params[pi];
    const auto cols = p.value.cols();
    std::vector<Eigen::Index> candidates;
    auto add_rows = [&](const auto& rows) {
      for (int r : rows) {
        for (Eigen::Index c = 0; c < cols; ++c) candidates.push_back(r * cols + c);
      }
    };
    if (p.name == "embed.token") {
      add_rows(token_rows);
    } else if (p.name == "embed.whole_word") {
      add_rows(ww_rows);
    } else if (p.name == "embed.position") {
      std::vector<int> rows(static_cast<std::size_t>(max_positions));
      std::iota(rows.begin(), rows.end(), 0);
      add_rows(rows);
    } else {
      candidates.resize(static_cast<std::size_t>(p.value.size()));
      std::iota(candidates.begin(), candidates.end(), Eigen::Index{0});
    }
    std::shuffle(candidates.begin(), candidates.end(), rng);
    const auto take = std::min(candidates.size(), static_cast<std::size_t>(samples_per_group));

    GroupAudit group{p.name, static_cast<int>(take), 0.0};
    for (std::size_t s = 0; s < take; ++s) {
      const auto entry = candidates[s];
      const double analytic = grads.tensors[pi].data()[entry];
      const double numeric = central_difference(model, batch, pi, entry, epsilon);
      group.max_rel_error = std::max(group.max_rel_error, relative_error(analytic, numeric));
    }
    result.max_rel_error = std::max(result.max_rel_error, group.max_rel_error);
    result.groups.push_back(std::move(group));
  }
  return result;
}

}  // namespace p5rec::train
