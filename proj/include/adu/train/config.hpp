#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "adu/core/params.hpp"
#include "adu/distill/losses.hpp"

namespace adu::train {

struct TrainConfig {
  Role stage = Role::student;  // teacher or student
  std::size_t epochs = 10;
  std::size_t max_steps = 0;  // 0: run every epoch in full
  std::size_t batch_size = 4;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  distill::DistillConfig loss;
  std::uint64_t seed = 0;
  std::filesystem::path manifest;
  std::filesystem::path teacher_checkpoint;  // student stage only
  std::filesystem::path out_checkpoint;      // empty: not written
  std::filesystem::path run_log;             // empty: not written
  // Wall time varies run to run; with this off the seconds column is written
  // as 0 so repeated runs produce byte-identical logs.
  bool log_wall_time = true;

  /// Throws ConfigError on out-of-range values. Does not touch the filesystem.
  void validate() const;
};

nlohmann::ordered_json to_json(const TrainConfig& config);
/// Fields absent from `j` keep the values already in `base`; unknown keys
/// are rejected.
TrainConfig config_from_json(const nlohmann::json& j, TrainConfig base = {});

}  // namespace adu::train
