#include "adu/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "adu/core/ops.hpp"
#include "adu/error.hpp"
#include "adu/nets/network.hpp"
#include "adu/synth/io.hpp"
#include "adu/train/checkpoint.hpp"

namespace adu::eval {

MetricsReport compute_metrics(std::span<const double> pred, std::span<const double> gt,
                              std::span<const double> mask, Cap cap) {
  if (pred.size() != gt.size()) throw ShapeError("compute_metrics: pred and gt sizes differ");
  if (!mask.empty() && mask.size() != gt.size()) {
    throw ShapeError("compute_metrics: mask size differs from gt");
  }
  if (!(cap.min > 0.0 && cap.max > cap.min)) throw ConfigError("compute_metrics: invalid cap");

  std::vector<double> p, g;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (!mask.empty() && mask[i] == 0.0) continue;
    if (!(gt[i] > cap.min && gt[i] <= cap.max)) continue;
    p.push_back(std::clamp(pred[i], cap.min, cap.max));
    g.push_back(gt[i]);
  }
  if (p.empty()) throw ContractError("compute_metrics: no valid pixels");

  const double n = static_cast<double>(p.size());
  double abs_rel = 0, sq_rel = 0, sq = 0, sq_log = 0, d1 = 0, d2 = 0, d3 = 0, sq_inv = 0;
  double mean_g = 0;
  std::vector<double> logs(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double diff = p[i] - g[i];
    abs_rel += std::abs(diff) / g[i];
    sq_rel += diff * diff / g[i];
    sq += diff * diff;
    logs[i] = std::log(p[i]) - std::log(g[i]);
    sq_log += logs[i] * logs[i];
    mean_g += logs[i];
    const double ratio = std::max(p[i] / g[i], g[i] / p[i]);
    d1 += ratio < 1.25;
    d2 += ratio < 1.25 * 1.25;
    d3 += ratio < 1.25 * 1.25 * 1.25;
    const double inv = 1.0 / p[i] - 1.0 / g[i];
    sq_inv += inv * inv;
  }
  mean_g /= n;
  // Centered form of mean(g^2) - mean(g)^2; never negative.
  double var = 0;
  for (double l : logs) var += (l - mean_g) * (l - mean_g);
  var /= n;

  MetricsReport r;
  r.abs_rel = abs_rel / n;
  r.sq_rel = sq_rel / n;
  r.rmse = std::sqrt(sq / n);
  r.rmse_log = std::sqrt(sq_log / n);
  r.delta1 = d1 / n;
  r.delta2 = d2 / n;
  r.delta3 = d3 / n;
  r.silog = 100.0 * std::sqrt(var);
  r.irmse = std::sqrt(sq_inv / n);
  r.valid = p.size();
  r.cap = cap;
  return r;
}

MetricsReport compute_metrics(const Tensor& pred, const Tensor& gt, const Tensor& mask, Cap cap) {
  if (pred.shape() != gt.shape()) {
    throw ShapeError("compute_metrics: " + shape_str(pred.shape()) + " vs " +
                     shape_str(gt.shape()));
  }
  return compute_metrics(pred.data(), gt.data(),
                         mask.defined() ? mask.data() : std::span<const double>{}, cap);
}

MetricsReport mean_report(std::span<const MetricsReport> reports) {
  if (reports.empty()) throw ContractError("mean_report: no reports");
  MetricsReport m;
  m.cap = reports.front().cap;
  for (const auto& r : reports) {
    m.abs_rel += r.abs_rel;
    m.sq_rel += r.sq_rel;
    m.rmse += r.rmse;
    m.rmse_log += r.rmse_log;
    m.delta1 += r.delta1;
    m.delta2 += r.delta2;
    m.delta3 += r.delta3;
    m.silog += r.silog;
    m.irmse += r.irmse;
    m.valid += r.valid;
  }
  const double n = static_cast<double>(reports.size());
  for (double* f : {&m.abs_rel, &m.sq_rel, &m.rmse, &m.rmse_log, &m.delta1, &m.delta2, &m.delta3,
                    &m.silog, &m.irmse}) {
    *f /= n;
  }
  return m;
}

EvalResult evaluate(const ModelParams& params, const train::SplitData& data, Cap cap) {
  if (params.role() != Role::teacher && params.role() != Role::student) {
    throw ConfigError("evaluate: checkpoint role must be teacher or student");
  }
  constexpr std::size_t kChunk = 8;
  NoGradGuard no_grad;
  EvalResult result;
  std::vector<MetricsReport> reports;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += kChunk) {
    idx.clear();
    for (std::size_t i = start; i < std::min(start + kChunk, data.size()); ++i) idx.push_back(i);
    const auto b = train::make_batch(data, idx);
    const auto out = params.role() == Role::teacher
                         ? nets::teacher_forward(b.left, b.right, params)
                         : nets::student_forward(b.left, params);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      auto m = compute_metrics(slice_batch(out.depth, k), data.depth[idx[k]], {}, cap);
      result.samples.push_back({data.ids[idx[k]], m});
      reports.push_back(m);
    }
  }
  result.mean = mean_report(reports);
  return result;
}

EvalResult evaluate_checkpoint(const std::filesystem::path& checkpoint,
                               const std::filesystem::path& manifest, const std::string& split,
                               Cap cap, const std::optional<std::filesystem::path>& csv_out) {
  const auto ck = train::load_checkpoint(checkpoint);
  const auto data = train::load_split(synth::read_manifest(manifest), split);
  EvalResult r = evaluate(ck.params, data, cap);
  if (csv_out) {
    const std::string text = metrics_csv(r);
    synth::write_file(*csv_out, std::span(reinterpret_cast<const std::uint8_t*>(text.data()),
                                          text.size()));
  }
  return r;
}

std::string metrics_csv(const EvalResult& result) {
  std::string out = std::string(kMetricsCsvHeader) + "\n";
  auto row = [&](const std::string& id, const MetricsReport& m) {
    char buf[512];
    std::snprintf(buf, sizeof buf, "%s,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g\n",
                  id.c_str(), m.abs_rel, m.sq_rel, m.rmse, m.rmse_log, m.delta1, m.delta2,
                  m.delta3, m.silog, m.irmse);
    out += buf;
  };
  for (const auto& s : result.samples) row(s.id, s.metrics);
  row("MEAN", result.mean);
  return out;
}

}  // namespace adu::eval
