#include "adu/train/trainer.hpp"

#include <chrono>
#include <memory>
#include <optional>
#include <string>

#include "adu/error.hpp"
#include "adu/nets/network.hpp"
#include "adu/train/adam.hpp"
#include "adu/train/checkpoint.hpp"
#include "adu/train/data.hpp"
#include "adu/train/runlog.hpp"

namespace adu::train {

namespace {

using Clock = std::chrono::steady_clock;

void check_bookkeeping(const distill::LossBreakdown& b, std::uint64_t step) {
  const double expect = b.l_b + b.lambda1 * b.l_umr + b.lambda2 * b.l_umf + b.lambda3 * b.l_focal;
  if (b.total != expect) {
    throw ContractError("step " + std::to_string(step) + ": total loss breaks the weighted sum");
  }
}

// Shared epoch/step loop. `step_fn` runs forward and backward for one batch
// and returns its breakdown; the optimizer update happens here.
TrainResult run_loop(const TrainConfig& config, const SplitData& data, ModelParams& trainable,
                     const std::function<distill::LossBreakdown(const Batch&)>& step_fn,
                     const StepCallback& on_step) {
  const std::size_t batch = std::min(config.batch_size, data.size());
  const std::size_t per_epoch = data.size() / batch;
  const std::uint64_t total = config.max_steps ? config.max_steps : config.epochs * per_epoch;

  std::unique_ptr<RunLog> log;
  if (!config.run_log.empty()) log = std::make_unique<RunLog>(config.run_log);

  AdamState state;
  const AdamOptions adam{config.learning_rate, config.beta1, config.beta2, config.adam_eps};
  TrainResult result;
  const auto start = Clock::now();
  std::uint64_t step = 0;
  for (std::uint64_t epoch = 0; step < total; ++epoch) {
    const auto order = shuffled_indices(data.size(), config.seed, epoch);
    for (std::size_t b = 0; b < per_epoch && step < total; ++b) {
      const Batch mb = make_batch(data, std::span(order).subspan(b * batch, batch));
      trainable.zero_grad();
      distill::LossBreakdown bd;
      try {
        bd = step_fn(mb);
        adam_step(trainable, state, adam);
      } catch (const NonFiniteError& e) {
        throw NonFiniteError("training aborted at step " + std::to_string(step) + ": " + e.what());
      }
      check_bookkeeping(bd, step);
      const double secs =
          config.log_wall_time ? std::chrono::duration<double>(Clock::now() - start).count() : 0.0;
      if (log) log->append(step, bd, secs);
      if (on_step) on_step(step, bd);
      result.history.push_back(bd);
      ++step;
    }
  }
  trainable.zero_grad();
  result.steps = step;
  return result;
}

// Mean per-batch L_b over the whole split without building a graph.
double split_l_b(const ModelParams& params, const SplitData& data, const TrainConfig& config) {
  NoGradGuard no_grad;
  const std::size_t batch = std::min(config.batch_size, data.size());
  double total = 0.0;
  std::size_t batches = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += batch) {
    idx.clear();
    for (std::size_t i = start; i < std::min(start + batch, data.size()); ++i) idx.push_back(i);
    const Batch b = make_batch(data, idx);
    const auto out = params.role() == Role::teacher ? nets::teacher_forward(b.left, b.right, params)
                                                    : nets::student_forward(b.left, params);
    total += distill::silog_loss(out.depth, b.depth, {}, config.loss.silog_alpha,
                                 config.loss.silog_lambda)
                 .item();
    ++batches;
  }
  return total / static_cast<double>(batches);
}

}  // namespace

std::uint64_t network_seed(std::uint64_t seed, Role role) {
  return seed * 4 + static_cast<std::uint64_t>(role) + 0x5EED0000ull;
}

TrainResult train_teacher(const TrainConfig& config, const StepCallback& on_step) {
  config.validate();
  if (config.stage != Role::teacher) throw ConfigError("train_teacher: stage must be teacher");
  const SplitData data = load_split(synth::read_manifest(config.manifest), "train");

  ModelParams params = nets::init_params(Role::teacher, network_seed(config.seed, Role::teacher));
  const auto& lc = config.loss;
  const double initial = split_l_b(params, data, config);
  TrainResult r = run_loop(
      config, data, params,
      [&](const Batch& b) {
        auto out = nets::teacher_forward(b.left, b.right, params);
        Tensor loss = distill::silog_loss(out.depth, b.depth, {}, lc.silog_alpha, lc.silog_lambda);
        loss.backward();
        distill::LossBreakdown bd;
        bd.lambda1 = lc.lambda1;
        bd.lambda2 = lc.lambda2;
        bd.lambda3 = lc.lambda3;
        bd.l_b = bd.total = loss.item();
        return bd;
      },
      on_step);
  if (!config.out_checkpoint.empty()) {
    save_checkpoint(config.out_checkpoint, params, to_json(config), r.steps);
  }
  r.initial_train_l_b = initial;
  r.final_train_l_b = split_l_b(params, data, config);
  r.params = std::move(params);
  return r;
}

TrainResult train_student(const TrainConfig& config, const StepCallback& on_step) {
  config.validate();
  if (config.stage != Role::student) throw ConfigError("train_student: stage must be student");
  const auto& lc = config.loss;

  std::optional<ModelParams> teacher;
  if (lc.distill) {
    Checkpoint ck = load_checkpoint(config.teacher_checkpoint, Role::teacher);
    check_layout(ck.params, nets::init_params(Role::teacher, 0));
    teacher = std::move(ck.params);
  }
  const SplitData data = load_split(synth::read_manifest(config.manifest), "train");

  ModelParams student = nets::init_params(Role::student, network_seed(config.seed, Role::student));
  ModelParams adapter = distill::init_adapter(network_seed(config.seed, Role::adapter));
  ModelParams trainable = student;  // shares tensors with `student`
  if (lc.distill) trainable.append(adapter);

  const double initial = split_l_b(student, data, config);
  const std::uint64_t before = teacher ? checksum(*teacher) : 0;
  TrainResult r = run_loop(
      config, data, trainable,
      [&](const Batch& b) {
        nets::NetOutput t;
        if (teacher) {
          NoGradGuard frozen;
          t = nets::teacher_forward(b.left, b.right, *teacher);
        }
        auto s = nets::student_forward(b.left, student);
        auto loss = distill::total_student_loss(s, t, adapter, b.depth, {}, lc);
        loss.total.backward();
        return loss.breakdown;
      },
      on_step);
  r.teacher_checksum_before = before;
  r.teacher_checksum_after = teacher ? checksum(*teacher) : 0;
  if (r.teacher_checksum_before != r.teacher_checksum_after) {
    throw ContractError("teacher parameters changed during student training");
  }
  if (!config.out_checkpoint.empty()) {
    save_checkpoint(config.out_checkpoint, trainable, to_json(config), r.steps);
  }
  r.initial_train_l_b = initial;
  r.final_train_l_b = split_l_b(student, data, config);
  r.params = std::move(trainable);
  return r;
}

TrainResult train(const TrainConfig& config, const StepCallback& on_step) {
  return config.stage == Role::teacher ? train_teacher(config, on_step)
                                       : train_student(config, on_step);
}

}  // namespace adu::train
