// adu_depth: synthetic stereo data, teacher/student training, evaluation,
// inference and gradient checks from one binary.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "adu/core/ops.hpp"
#include "adu/distill/gradsuite.hpp"
#include "adu/error.hpp"
#include "adu/eval/metrics.hpp"
#include "adu/nets/network.hpp"
#include "adu/synth/dataset.hpp"
#include "adu/synth/io.hpp"
#include "adu/train/checkpoint.hpp"
#include "adu/train/data.hpp"
#include "adu/train/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 1;
constexpr int kExitFailed = 2;

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("adu");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%H:%M:%S] [%^%l%$] %v");
  const char* env = std::getenv("ADU_LOG_LEVEL");
  const std::string level = env ? env : "info";
  if (level == "error") {
    spdlog::set_level(spdlog::level::err);
  } else if (level == "debug") {
    spdlog::set_level(spdlog::level::debug);
  } else {
    spdlog::set_level(spdlog::level::info);
    if (level != "info") spdlog::warn("ADU_LOG_LEVEL='{}' not one of error|info|debug; using info", level);
  }
}

// Missing inputs are usage errors (exit 1), not runtime failures.
void require_file(const fs::path& p, const char* what) {
  if (!fs::is_regular_file(p)) throw adu::ConfigError(std::string(what) + " not found: " + p.string());
}

json read_config(const std::optional<std::string>& path) {
  if (!path) return json::object();
  require_file(*path, "config");
  std::ifstream in(*path);
  if (!in) throw adu::ConfigError("cannot read config " + *path);
  try {
    json j = json::parse(in);
    if (!j.is_object()) throw adu::ConfigError("config " + *path + " must be a JSON object");
    return j;
  } catch (const json::parse_error& e) {
    throw adu::ConfigError("config " + *path + ": " + e.what());
  }
}

// Value precedence: explicit flag, then config file, then default.
class Resolver {
 public:
  Resolver(const json& config, std::set<std::string> known) : config_(config), known_(std::move(known)) {
    for (const auto& [key, v] : config_.items()) {
      if (!known_.count(key)) throw adu::ConfigError("config: unknown key '" + key + "'");
    }
  }
  template <class T>
  T get(const std::optional<T>& flag, const char* key, T fallback) const {
    if (flag) return *flag;
    if (config_.contains(key)) {
      try {
        return config_.at(key).get<T>();
      } catch (const json::exception& e) {
        throw adu::ConfigError(std::string("config key '") + key + "': " + e.what());
      }
    }
    return fallback;
  }

 private:
  const json& config_;
  std::set<std::string> known_;
};

void echo(const char* command, const ordered_json& resolved) {
  spdlog::info("{} config: {}", command, resolved.dump());
}

fs::path require_out_dir(const std::string& out) {
  fs::path p(out);
  fs::create_directories(p);
  return p;
}

// ---- subcommands --------------------------------------------------------

struct GenArgs {
  std::optional<std::string> out;
  std::optional<std::size_t> n_train, n_test;
  bool overwrite = false;
};

int run_gen(const GenArgs& a, const json& cfg, std::optional<std::uint64_t> seed_flag) {
  Resolver r(cfg, {"out", "train", "test", "seed", "overwrite"});
  const auto out = r.get(a.out, "out", std::string{});
  if (out.empty()) throw adu::ConfigError("gen-data: --out is required");
  const auto n_train = r.get(a.n_train, "train", std::size_t{64});
  const auto n_test = r.get(a.n_test, "test", std::size_t{16});
  const auto seed = r.get(seed_flag, "seed", std::uint64_t{0});
  const bool overwrite = a.overwrite || (cfg.contains("overwrite") && cfg["overwrite"].get<bool>());
  echo("gen-data", {{"out", out}, {"train", n_train}, {"test", n_test}, {"seed", seed},
                    {"overwrite", overwrite}});
  const auto m = adu::synth::build_dataset(n_train, n_test, seed, out, overwrite);
  spdlog::info("wrote {} samples and {}", m.entries.size(), (fs::path(out) / "manifest.jsonl").string());
  return kExitOk;
}

struct TrainArgs {
  std::optional<std::string> data, teacher, out;
  std::optional<std::size_t> epochs, steps, batch;
  std::optional<double> lr, beta1, beta2, adam_eps, lambda1, lambda2, lambda3, alpha_d, gamma;
  bool no_distill = false, no_focal = false, no_uem = false, no_attention = false;
  bool no_wall_time = false;
};

int run_train(adu::Role stage, const TrainArgs& a, const json& cfg,
              std::optional<std::uint64_t> seed_flag) {
  namespace tr = adu::train;
  tr::TrainConfig base;
  base.stage = stage;
  json file = cfg;
  if (file.contains("stage") && file["stage"] != std::string(adu::role_name(stage))) {
    throw adu::ConfigError("config stage does not match the subcommand");
  }
  tr::TrainConfig c = tr::config_from_json(file, base);
  if (a.data) c.manifest = *a.data;
  if (a.teacher) c.teacher_checkpoint = *a.teacher;
  if (a.epochs) c.epochs = *a.epochs;
  if (a.steps) c.max_steps = *a.steps;
  if (a.batch) c.batch_size = *a.batch;
  if (a.lr) c.learning_rate = *a.lr;
  if (a.beta1) c.beta1 = *a.beta1;
  if (a.beta2) c.beta2 = *a.beta2;
  if (a.adam_eps) c.adam_eps = *a.adam_eps;
  if (a.lambda1) c.loss.lambda1 = *a.lambda1;
  if (a.lambda2) c.loss.lambda2 = *a.lambda2;
  if (a.lambda3) c.loss.lambda3 = *a.lambda3;
  if (a.alpha_d) c.loss.alpha_d = *a.alpha_d;
  if (a.gamma) c.loss.gamma = *a.gamma;
  if (a.no_distill) c.loss.distill = false;
  if (a.no_focal) c.loss.focal = false;
  if (a.no_uem) c.loss.uem = false;
  if (a.no_attention) c.loss.attention = false;
  if (a.no_wall_time) c.log_wall_time = false;
  if (seed_flag) c.seed = *seed_flag;
  if (!a.out) throw adu::ConfigError("--out is required");
  const fs::path out = require_out_dir(*a.out);
  c.out_checkpoint = out / "checkpoint.ckpt";
  c.run_log = out / "runlog.csv";
  c.validate();
  require_file(c.manifest, "manifest");
  if (stage == adu::Role::student && c.loss.distill) require_file(c.teacher_checkpoint, "teacher checkpoint");

  const auto resolved = tr::to_json(c);
  echo(stage == adu::Role::teacher ? "train-teacher" : "train-student", resolved);
  {
    std::ofstream cf(out / "config.json");
    cf << resolved.dump(2) << '\n';
  }
  const auto r = tr::train(c, [](std::uint64_t step, const adu::distill::LossBreakdown& b) {
    const auto level = step % 50 == 0 ? spdlog::level::info : spdlog::level::debug;
    spdlog::log(level, "step {} total {:.5f} l_b {:.5f} umr {:.5f} umf {:.5f} focal {:.5f} p_d {:.4f}",
                step, b.total, b.l_b, b.l_umr, b.l_umf, b.l_focal, b.p_d);
  });
  spdlog::info("{} steps; train L_b {:.5f} -> {:.5f}; checkpoint {}", r.steps, r.initial_train_l_b,
               r.final_train_l_b, c.out_checkpoint.string());
  if (stage == adu::Role::student && c.loss.distill) {
    spdlog::info("teacher checksum {:016x} before, {:016x} after", r.teacher_checksum_before,
                 r.teacher_checksum_after);
  }
  return kExitOk;
}

struct EvalArgs {
  std::optional<std::string> ckpt, data, split, out;
  std::optional<double> cap_min, cap_max;
};

int run_eval(const EvalArgs& a, const json& cfg) {
  Resolver r(cfg, {"ckpt", "data", "split", "out", "cap_min", "cap_max"});
  const auto ckpt = r.get(a.ckpt, "ckpt", std::string{});
  const auto data = r.get(a.data, "data", std::string{});
  const auto out = r.get(a.out, "out", std::string{});
  if (ckpt.empty() || data.empty() || out.empty()) {
    throw adu::ConfigError("eval: --ckpt, --data and --out are required");
  }
  adu::eval::Cap cap;
  cap.min = r.get(a.cap_min, "cap_min", cap.min);
  cap.max = r.get(a.cap_max, "cap_max", cap.max);
  const auto split = r.get(a.split, "split", std::string{"test"});
  echo("eval", {{"ckpt", ckpt}, {"data", data}, {"split", split}, {"out", out},
                {"cap_min", cap.min}, {"cap_max", cap.max}});
  require_file(ckpt, "checkpoint");
  require_file(data, "manifest");
  const fs::path csv = require_out_dir(out) / "metrics.csv";
  const auto res = adu::eval::evaluate_checkpoint(ckpt, data, split, cap, csv);
  const auto& m = res.mean;
  spdlog::info("{} samples: abs_rel {:.4f} sq_rel {:.4f} rmse {:.3f} rmse_log {:.4f} d1 {:.4f} "
               "d2 {:.4f} d3 {:.4f} silog {:.3f} irmse {:.5f}",
               res.samples.size(), m.abs_rel, m.sq_rel, m.rmse, m.rmse_log, m.delta1, m.delta2,
               m.delta3, m.silog, m.irmse);
  spdlog::info("wrote {}", csv.string());
  return kExitOk;
}

struct InferArgs {
  std::optional<std::string> ckpt, image, right, out;
};

int run_infer(const InferArgs& a, const json& cfg) {
  Resolver r(cfg, {"ckpt", "image", "right", "out"});
  const auto ckpt = r.get(a.ckpt, "ckpt", std::string{});
  const auto image = r.get(a.image, "image", std::string{});
  const auto right = r.get(a.right, "right", std::string{});
  const auto out = r.get(a.out, "out", std::string{});
  if (ckpt.empty() || image.empty() || out.empty()) {
    throw adu::ConfigError("infer: --ckpt, --image and --out are required");
  }
  echo("infer", {{"ckpt", ckpt}, {"image", image}, {"right", right}, {"out", out}});
  require_file(ckpt, "checkpoint");
  require_file(image, "image");
  if (!right.empty()) require_file(right, "right image");
  const auto ck = adu::train::load_checkpoint(ckpt);
  const auto left = adu::train::image_to_tensor(adu::synth::read_ppm(image));
  adu::NoGradGuard no_grad;
  adu::nets::NetOutput pred;
  if (ck.params.role() == adu::Role::teacher) {
    if (right.empty()) throw adu::ConfigError("infer: a teacher checkpoint needs --right");
    pred = adu::nets::teacher_forward(left, adu::train::image_to_tensor(adu::synth::read_ppm(right)),
                                      ck.params);
  } else if (ck.params.role() == adu::Role::student) {
    pred = adu::nets::student_forward(left, ck.params);
  } else {
    throw adu::ConfigError("infer: checkpoint role must be teacher or student");
  }
  const fs::path dir = require_out_dir(out);
  adu::synth::write_pfm(dir / "depth.pfm", adu::train::tensor_to_map(pred.depth));
  adu::synth::write_pfm(dir / "uncert.pfm", adu::train::tensor_to_map(pred.log_var));
  spdlog::info("wrote {} and {}", (dir / "depth.pfm").string(), (dir / "uncert.pfm").string());
  return kExitOk;
}

struct GradArgs {
  std::optional<std::string> out;
};

int run_gradcheck(const GradArgs& a, const json& cfg, std::optional<std::uint64_t> seed_flag) {
  Resolver r(cfg, {"seed", "out"});
  const auto seed = r.get(seed_flag, "seed", std::uint64_t{0});
  const auto out = r.get(a.out, "out", std::string{});
  echo("gradcheck", {{"seed", seed}, {"out", out}});
  const auto reports = adu::distill::gradient_suite(seed);
  bool all = true;
  ordered_json doc = ordered_json::array();
  for (const auto& [loss, rep] : reports) {
    all = all && rep.passed;
    spdlog::info("{:<32} {}  max rel err {:.3e}", loss, rep.passed ? "pass" : "FAIL", rep.worst());
    if (!rep.passed) spdlog::error("{}: {}", loss, rep.failure);
    doc.push_back({{"loss", loss}, {"passed", rep.passed}, {"max_rel_error", rep.worst()},
                   {"epsilon", rep.epsilon}, {"tolerance", rep.tolerance}});
  }
  spdlog::info("composite: {}", all ? "pass" : "FAIL");
  if (!out.empty()) {
    std::ofstream f(require_out_dir(out) / "gradcheck.json");
    f << ordered_json{{"seed", seed}, {"passed", all}, {"losses", doc}}.dump(2) << '\n';
  }
  return all ? kExitOk : kExitFailed;
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"ADU-Depth teacher/student distillation at desk scale"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand
  std::optional<std::uint64_t> seed;
  std::optional<std::string> config_path;
  app.add_option("--seed", seed, "Seed for data generation, initialization and shuffling");
  app.add_option("--config", config_path, "JSON file of option values; explicit flags win");

  GenArgs gen;
  auto* g = app.add_subcommand("gen-data", "Render a synthetic stereo dataset");
  g->add_option("--out", gen.out, "Output directory");
  g->add_option("--train", gen.n_train, "Training samples (default 64)");
  g->add_option("--test", gen.n_test, "Test samples (default 16)");
  g->add_flag("--overwrite", gen.overwrite, "Replace a non-empty output directory");

  TrainArgs ta, sa;
  auto add_train = [](CLI::App* s, TrainArgs& t) {
    s->add_option("--data", t.data, "Dataset manifest.jsonl");
    s->add_option("--out", t.out, "Output directory (checkpoint, run log, config)");
    s->add_option("--epochs", t.epochs, "Passes over the training split (default 10)");
    s->add_option("--steps", t.steps, "Stop after this many steps (overrides epochs)");
    s->add_option("--batch", t.batch, "Batch size (default 4)");
    s->add_option("--lr", t.lr, "Adam learning rate (default 1e-3)");
    s->add_option("--beta1", t.beta1, "Adam beta1 (default 0.9)");
    s->add_option("--beta2", t.beta2, "Adam beta2 (default 0.999)");
    s->add_option("--adam-eps", t.adam_eps, "Adam epsilon (default 1e-8)");
    s->add_flag("--no-wall-time", t.no_wall_time, "Write 0 in the run log seconds column");
  };
  auto* tt = app.add_subcommand("train-teacher", "Train the stereo teacher");
  add_train(tt, ta);
  auto* ts = app.add_subcommand("train-student", "Distill the monocular student");
  add_train(ts, sa);
  ts->add_option("--teacher", sa.teacher, "Teacher checkpoint");
  ts->add_option("--lambda1", sa.lambda1, "Response weight (default 0.9)");
  ts->add_option("--lambda2", sa.lambda2, "Feature weight (default 0.6)");
  ts->add_option("--lambda3", sa.lambda3, "Focal-depth weight (default 0.8)");
  ts->add_option("--alpha-d", sa.alpha_d, "Focal-depth scale (default 1)");
  ts->add_option("--gamma", sa.gamma, "Focal-depth focusing exponent (default 2)");
  ts->add_flag("--no-distill", sa.no_distill, "Supervised baseline (L_b only)");
  ts->add_flag("--no-focal", sa.no_focal, "Drop the focal-depth term");
  ts->add_flag("--no-uem", sa.no_uem, "Unweighted feature and mean-L1 response terms");
  ts->add_flag("--no-attention", sa.no_attention, "Linear 1x1 adapter instead of attention");

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "Metrics of a checkpoint on a dataset split");
  ev->add_option("--ckpt", ea.ckpt, "Teacher or student checkpoint");
  ev->add_option("--data", ea.data, "Dataset manifest.jsonl");
  ev->add_option("--split", ea.split, "train or test (default test)");
  ev->add_option("--out", ea.out, "Output directory for metrics.csv");
  ev->add_option("--cap-min", ea.cap_min, "Lower depth cap in m (default 1e-3)");
  ev->add_option("--cap-max", ea.cap_max, "Upper depth cap in m (default 80)");

  InferArgs ia;
  auto* inf = app.add_subcommand("infer", "Depth and log-variance maps for one image");
  inf->add_option("--ckpt", ia.ckpt, "Teacher or student checkpoint");
  inf->add_option("--image", ia.image, "Left (or only) image, PPM");
  inf->add_option("--right", ia.right, "Right image for a teacher checkpoint");
  inf->add_option("--out", ia.out, "Output directory for depth.pfm and uncert.pfm");

  GradArgs ga;
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of every loss");
  gc->add_option("--out", ga.out, "Optional directory for gradcheck.json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInvalid;
  }

  try {
    const json cfg = read_config(config_path);
    if (*g) return run_gen(gen, cfg, seed);
    if (*tt) return run_train(adu::Role::teacher, ta, cfg, seed);
    if (*ts) return run_train(adu::Role::student, sa, cfg, seed);
    if (*ev) return run_eval(ea, cfg);
    if (*inf) return run_infer(ia, cfg);
    if (*gc) return run_gradcheck(ga, cfg, seed);
  } catch (const adu::ConfigError& e) {
    spdlog::error("{}", e.what());
    return kExitInvalid;
  } catch (const adu::ParseError& e) {
    spdlog::error("{}", e.what());
    return kExitInvalid;
  } catch (const adu::ShapeError& e) {
    spdlog::error("{}", e.what());
    return kExitInvalid;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitFailed;
  }
  return kExitInvalid;
}
