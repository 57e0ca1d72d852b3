#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "p5rec/model/transformer.hpp"

namespace p5rec::train {

struct GroupAudit {
  std::string name;
  int sampled = 0;
  double max_rel_error = 0.0;
};

struct AuditResult {
  double max_rel_error = 0.0;
  std::vector<GroupAudit> groups;
};

/// Summed loss over `batch` in inference mode.
double batch_loss(const model::Seq2SeqModel& model, std::span<const model::Example> batch);

/// Central difference of batch_loss w.r.t. one parameter entry.
double central_difference(model::Seq2SeqModel& model, std::span<const model::Example> batch, std::size_t param,
                          Eigen::Index entry, double epsilon);

/// Relative error |a - n| / max(|a|, |n|, floor).
double relative_error(double analytic, double numeric, double floor = 1e-6);

/// Compares analytic gradients with central differences for up to
/// `samples_per_group` entries of every trainable tensor. Embedding tables
/// are sampled from rows the batch touches.
AuditResult finite_difference_audit(model::Seq2SeqModel& model, std::span<const model::Example> batch,
                                    double epsilon, int samples_per_group, std::uint64_t seed);

}  // namespace p5rec::train
