#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "adu/core/params.hpp"
#include "adu/core/tensor.hpp"
#include "adu/train/data.hpp"

namespace adu::eval {

/// Valid ground truth lies in (min, max]; predictions are clamped to [min, max].
struct Cap {
  double min = 1e-3;
  double max = 80.0;
};

struct MetricsReport {
  double abs_rel = 0.0;
  double sq_rel = 0.0;
  double rmse = 0.0;      // m
  double rmse_log = 0.0;
  double delta1 = 0.0;
  double delta2 = 0.0;
  double delta3 = 0.0;
  double silog = 0.0;
  double irmse = 0.0;     // 1/m
  std::size_t valid = 0;
  Cap cap;
};

/// `mask` may be empty (every pixel valid) or hold one flag per pixel.
/// Throws ContractError when no pixel survives the mask and the cap.
MetricsReport compute_metrics(std::span<const double> pred, std::span<const double> gt,
                              std::span<const double> mask = {}, Cap cap = {});
MetricsReport compute_metrics(const Tensor& pred, const Tensor& gt, const Tensor& mask = {},
                              Cap cap = {});

/// Equal-weight mean of per-image reports; valid counts are summed.
MetricsReport mean_report(std::span<const MetricsReport> reports);

struct SampleMetrics {
  std::string id;
  MetricsReport metrics;
};

struct EvalResult {
  std::vector<SampleMetrics> samples;
  MetricsReport mean;
};

/// Runs a teacher (stereo pairs) or student (left image) network over a split.
EvalResult evaluate(const ModelParams& params, const train::SplitData& data, Cap cap = {});

/// Loads the checkpoint and the named split of the manifest; writes the
/// per-sample CSV with a final MEAN row when `csv_out` is set.
EvalResult evaluate_checkpoint(const std::filesystem::path& checkpoint,
                               const std::filesystem::path& manifest, const std::string& split,
                               Cap cap = {},
                               const std::optional<std::filesystem::path>& csv_out = std::nullopt);

inline constexpr char kMetricsCsvHeader[] =
    "id,abs_rel,sq_rel,rmse,rmse_log,delta1,delta2,delta3,silog,irmse";
std::string metrics_csv(const EvalResult& result);

}  // namespace adu::eval
