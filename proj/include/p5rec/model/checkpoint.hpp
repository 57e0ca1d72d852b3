#pragma once

#include <cstdint>
#include <filesystem>

#include "p5rec/model/transformer.hpp"

namespace p5rec::model {

/// On-disk model state: config, vocabulary hash, step counter and the named
/// tensors.
struct Checkpoint {
  Seq2SeqModel model;
  std::uint64_t vocab_hash = 0;
  std::int64_t step = 0;
};

void save_checkpoint(const std::filesystem::path& path, const Seq2SeqModel& model, std::uint64_t vocab_hash,
                     std::int64_t step);

/// Loads a checkpoint and refuses it when its vocabulary hash differs from
/// `expected_vocab_hash`.
Checkpoint load_checkpoint(const std::filesystem::path& path, std::uint64_t expected_vocab_hash);

/// Loads without the vocabulary check (inspection only).
Checkpoint load_checkpoint_unchecked(const std::filesystem::path& path);

}  // namespace p5rec::model
