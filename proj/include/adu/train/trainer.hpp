#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "adu/core/params.hpp"
#include "adu/distill/losses.hpp"
#include "adu/train/config.hpp"

namespace adu::train {

struct TrainResult {
  /// Teacher network, or student network with the adapter appended.
  ModelParams params;
  std::vector<distill::LossBreakdown> history;  // one entry per step
  std::uint64_t steps = 0;
  // L_b over the whole training split (in order, batch_size at a time)
  // before the first and after the last update.
  double initial_train_l_b = 0.0;
  double final_train_l_b = 0.0;
  // Student stage: checksum of the frozen teacher before and after training.
  std::uint64_t teacher_checksum_before = 0;
  std::uint64_t teacher_checksum_after = 0;
};

using StepCallback = std::function<void(std::uint64_t step, const distill::LossBreakdown&)>;

/// Seed offsets so teacher, student, adapter and shuffling never share a stream.
std::uint64_t network_seed(std::uint64_t seed, Role role);

/// Stereo teacher on the scale-invariant log loss alone.
TrainResult train_teacher(const TrainConfig& config, const StepCallback& on_step = {});
/// Monocular student against a frozen teacher checkpoint (or supervised only
/// when config.loss.distill is false). Aborts with NonFiniteError naming the
/// step and term; no checkpoint is written in that case.
TrainResult train_student(const TrainConfig& config, const StepCallback& on_step = {});
/// Dispatches on config.stage.
TrainResult train(const TrainConfig& config, const StepCallback& on_step = {});

}  // namespace adu::train
