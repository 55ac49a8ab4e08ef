#include "adu/train/config.hpp"

#include <cmath>
#include <set>

#include "adu/error.hpp"

namespace adu::train {

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("train config: " + m); };
  if (stage != Role::teacher && stage != Role::student) fail("stage must be teacher or student");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) fail("learning_rate must be > 0");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (epochs < 1 && max_steps == 0) fail("epochs must be >= 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) fail("beta1 must be in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) fail("beta2 must be in [0, 1)");
  if (!(adam_eps > 0.0)) fail("adam_eps must be > 0");
  if (loss.gamma < 0.0) fail("gamma must be >= 0");
  if (!(loss.alpha_d > 0.0)) fail("alpha_d must be > 0");
  if (loss.lambda1 < 0.0 || loss.lambda2 < 0.0 || loss.lambda3 < 0.0) fail("lambdas must be >= 0");
  if (loss.silog_lambda < 0.0 || loss.silog_lambda > 1.0) fail("silog_lambda must be in [0, 1]");
  if (manifest.empty()) fail("manifest path is required");
  if (stage == Role::student && loss.distill && teacher_checkpoint.empty()) {
    fail("student stage with distillation requires teacher_checkpoint");
  }
}

nlohmann::ordered_json to_json(const TrainConfig& c) {
  nlohmann::ordered_json j;
  j["stage"] = std::string(role_name(c.stage));
  j["epochs"] = c.epochs;
  j["max_steps"] = c.max_steps;
  j["batch_size"] = c.batch_size;
  j["learning_rate"] = c.learning_rate;
  j["beta1"] = c.beta1;
  j["beta2"] = c.beta2;
  j["adam_eps"] = c.adam_eps;
  j["lambda1"] = c.loss.lambda1;
  j["lambda2"] = c.loss.lambda2;
  j["lambda3"] = c.loss.lambda3;
  j["alpha_d"] = c.loss.alpha_d;
  j["gamma"] = c.loss.gamma;
  j["silog_alpha"] = c.loss.silog_alpha;
  j["silog_lambda"] = c.loss.silog_lambda;
  j["distill"] = c.loss.distill;
  j["focal"] = c.loss.focal;
  j["uem"] = c.loss.uem;
  j["attention"] = c.loss.attention;
  j["seed"] = c.seed;
  j["manifest"] = c.manifest.generic_string();
  j["teacher_checkpoint"] = c.teacher_checkpoint.generic_string();
  j["out_checkpoint"] = c.out_checkpoint.generic_string();
  j["run_log"] = c.run_log.generic_string();
  j["log_wall_time"] = c.log_wall_time;
  return j;
}

TrainConfig config_from_json(const nlohmann::json& j, TrainConfig c) {
  if (!j.is_object()) throw ConfigError("train config: expected a JSON object");
  static const std::set<std::string> known = [] {
    std::set<std::string> k;
    const auto defaults = to_json(TrainConfig{});
    for (const auto& [key, v] : defaults.items()) k.insert(key);
    return k;
  }();
  for (const auto& [key, v] : j.items()) {
    if (!known.count(key)) throw ConfigError("train config: unknown key '" + key + "'");
  }
  try {
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
    };
    auto get_path = [&](const char* key, std::filesystem::path& field) {
      if (j.contains(key)) field = j.at(key).get<std::string>();
    };
    if (j.contains("stage")) c.stage = parse_role(j.at("stage").get<std::string>());
    get("epochs", c.epochs);
    get("max_steps", c.max_steps);
    get("batch_size", c.batch_size);
    get("learning_rate", c.learning_rate);
    get("beta1", c.beta1);
    get("beta2", c.beta2);
    get("adam_eps", c.adam_eps);
    get("lambda1", c.loss.lambda1);
    get("lambda2", c.loss.lambda2);
    get("lambda3", c.loss.lambda3);
    get("alpha_d", c.loss.alpha_d);
    get("gamma", c.loss.gamma);
    get("silog_alpha", c.loss.silog_alpha);
    get("silog_lambda", c.loss.silog_lambda);
    get("distill", c.loss.distill);
    get("focal", c.loss.focal);
    get("uem", c.loss.uem);
    get("attention", c.loss.attention);
    get("seed", c.seed);
    get_path("manifest", c.manifest);
    get_path("teacher_checkpoint", c.teacher_checkpoint);
    get_path("out_checkpoint", c.out_checkpoint);
    get_path("run_log", c.run_log);
    get("log_wall_time", c.log_wall_time);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  return c;
}

}  // namespace adu::train
