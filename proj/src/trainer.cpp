#include "rlvr/trainer.hpp"

#include <chrono>
#include <cmath>
#include <ostream>

#include <fmt/format.h>

#include "rlvr/errors.hpp"
#include "rlvr/rng.hpp"

namespace rlvr {

std::string_view to_string(OptimizerKind kind) {
  return kind == OptimizerKind::kSgd ? "sgd" : "adam";
}

OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "sgd") return OptimizerKind::kSgd;
  if (name == "adam") return OptimizerKind::kAdam;
  throw ValidationError(fmt::format("unknown optimizer '{}'", name));
}

void apply_update(PolicyParams& params, const GradientTable& gradient, OptimizerState& state,
                  double learning_rate) {
  if (gradient.size() != params.size()) throw ValidationError("gradient shape mismatch");
  auto z = params.values();
  auto g = gradient.values();
  ++state.step;
  if (state.kind == OptimizerKind::kSgd) {
    for (std::size_t i = 0; i < z.size(); ++i) z[i] -= learning_rate * g[i];
    return;
  }
  if (state.first_moment.size() != z.size()) {
    state.first_moment.assign(z.size(), 0.0);
    state.second_moment.assign(z.size(), 0.0);
  }
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(kAdamBeta1, t);
  const double correction2 = 1.0 - std::pow(kAdamBeta2, t);
  for (std::size_t i = 0; i < z.size(); ++i) {
    double& m = state.first_moment[i];
    double& v = state.second_moment[i];
    m = kAdamBeta1 * m + (1.0 - kAdamBeta1) * g[i];
    v = kAdamBeta2 * v + (1.0 - kAdamBeta2) * g[i] * g[i];
    const double m_hat = m / correction1;
    const double v_hat = v / correction2;
    z[i] -= learning_rate * m_hat / (std::sqrt(v_hat) + kAdamEpsilon);
  }
}

void TrainConfig::validate() const {
  task.validate();
  objective.validate();
  if (prompt_count < 1) throw ValidationError("prompt_count must be positive");
  if (group_size < 1) throw ValidationError("group_size must be positive");
  if (prompts_per_step < 1 || prompts_per_step > prompt_count) {
    throw ValidationError("prompts_per_step must be in [1, prompt_count]");
  }
  const int batch = prompts_per_step * group_size;
  if (mini_batch_size < 1 || batch % mini_batch_size != 0) {
    throw ValidationError(fmt::format(
        "mini_batch_size {} must divide prompts_per_step * group_size = {}", mini_batch_size, batch));
  }
  if (epochs < 1) throw ValidationError("epochs must be positive");
  if (steps < 0) throw ValidationError("steps must be >= 0");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ValidationError("learning_rate must be > 0");
  }
  if (!(train_temperature > 0.0)) throw ValidationError("train_temperature must be > 0");
  if (checkpoint_every < 1) throw ValidationError("checkpoint_every must be positive");
  if (!(eval.temperature > 0.0)) throw ValidationError("eval temperature must be > 0");
  if (eval.k_list.empty()) throw ValidationError("eval k_list is empty");
  for (int k : eval.k_list) {
    if (k < 1 || k > eval.samples) {
      throw ValidationError(fmt::format("eval k={} must be in [1, samples={}]", k, eval.samples));
    }
  }
}

nlohmann::json to_json(const StepRecord& r, bool include_wall_time) {
  nlohmann::json j;
  j["schema"] = kTrainLogSchema;
  j["step"] = r.step;
  j["loss"] = r.loss;
  j["entropy"] = r.entropy;
  j["sequence_entropy"] = r.sequence_entropy;
  j["correct_ratio"] = r.correct_ratio;
  j["fully_solved_ratio"] = r.fully_solved_ratio;
  j["grad_norm"] = r.grad_norm;
  j["kl_to_ref"] = r.kl_to_ref;
  j["correct_mass"] = r.correct_mass;
  j["clipped_tokens"] = r.clipped_tokens;
  j["updates"] = r.updates;
  if (include_wall_time) j["wall_time_s"] = r.wall_time_s;
  return j;
}

StepRecord step_record_from_json(const nlohmann::json& j) {
  if (j.value("schema", std::string{}) != kTrainLogSchema) {
    throw ValidationError("train log record has an unknown schema");
  }
  StepRecord r;
  r.step = j.at("step").get<int>();
  r.loss = j.at("loss").get<double>();
  r.entropy = j.at("entropy").get<double>();
  r.sequence_entropy = j.at("sequence_entropy").get<double>();
  r.correct_ratio = j.at("correct_ratio").get<double>();
  r.fully_solved_ratio = j.at("fully_solved_ratio").get<double>();
  r.grad_norm = j.at("grad_norm").get<double>();
  r.kl_to_ref = j.at("kl_to_ref").get<double>();
  r.correct_mass = j.at("correct_mass").get<double>();
  r.clipped_tokens = j.at("clipped_tokens").get<int>();
  r.updates = j.at("updates").get<int>();
  r.wall_time_s = j.value("wall_time_s", 0.0);
  return r;
}

std::vector<PromptInstance> make_prompts(const TrainConfig& config) {
  return generate_prompts(config.task, config.prompt_count,
                          splitmix64(config.seed ^ purpose_tag(StreamPurpose::kPrompts)));
}

PolicyParams make_initial_params(const TrainConfig& config,
                                 std::span<const PromptInstance> prompts) {
  InitOptions init = config.init;
  init.seed = config.seed;
  return init_params(prompts, init);
}

std::vector<int> prompts_for_step(const TrainConfig& config, int step) {
  std::vector<int> ids;
  ids.reserve(static_cast<std::size_t>(config.prompts_per_step));
  const auto start = static_cast<std::int64_t>(step) * config.prompts_per_step;
  for (int j = 0; j < config.prompts_per_step; ++j) {
    ids.push_back(static_cast<int>((start + j) % config.prompt_count));
  }
  return ids;
}

std::vector<RolloutGroup> collect_rollouts(const PolicyParams& params,
                                           std::span<const PromptInstance> prompts,
                                           std::span<const int> prompt_ids, int group_size,
                                           double temperature, std::uint64_t seed, int step) {
  std::vector<RolloutGroup> groups;
  groups.reserve(prompt_ids.size());
  for (int id : prompt_ids) {
    const PromptInstance& prompt = prompts[static_cast<std::size_t>(id)];
    RolloutGroup group{id, {}};
    for (int g = 0; g < group_size; ++g) {
      const std::uint64_t stream_seed =
          splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(step) * 0x100000001b3ULL +
                                       static_cast<std::uint64_t>(id) * 0x10001ULL +
                                       static_cast<std::uint64_t>(g)));
      Rng rng = substream(stream_seed, {purpose_tag(StreamPurpose::kRollout)});
      Trajectory traj = sample_trajectory(params, prompt, rng, temperature);
      traj.reward = verify(prompt, traj.tokens);
      traj.rollout_index = g;
      traj.seed = stream_seed;
      group.trajectories.push_back(std::move(traj));
    }
    groups.push_back(std::move(group));
  }
  return groups;
}

namespace {

// Consecutive slices of `size` trajectories, in prompt-major order.
std::vector<std::vector<ScoredGroup>> split_minibatches(const std::vector<ScoredGroup>& batch,
                                                        int size) {
  std::vector<std::vector<ScoredGroup>> out;
  std::vector<ScoredGroup> current;
  int filled = 0;
  for (const ScoredGroup& sg : batch) {
    for (std::size_t i = 0; i < sg.group.trajectories.size(); ++i) {
      if (current.empty() || current.back().group.prompt_id != sg.group.prompt_id || filled == 0) {
        current.push_back({RolloutGroup{sg.group.prompt_id, {}}, {}});
      }
      ScoredGroup& dst = current.back();
      dst.group.trajectories.push_back(sg.group.trajectories[i]);
      dst.advantages.per_token.push_back(sg.advantages.per_token[i]);
      dst.advantages.active.push_back(sg.advantages.active[i]);
      if (++filled == size) {
        out.push_back(std::move(current));
        current.clear();
        filled = 0;
      }
    }
  }
  if (!current.empty()) out.push_back(std::move(current));
  return out;
}

bool finite(double x) { return std::isfinite(x); }

}  // namespace

TrainResult train_from(const TrainConfig& config, std::vector<PromptInstance> prompts,
                       PolicyParams initial) {
  config.validate();
  if (static_cast<int>(prompts.size()) != config.prompt_count ||
      initial.num_prompts() != config.prompt_count || !(initial.task() == config.task)) {
    throw ValidationError("initial policy does not match the training config");
  }
  using Clock = std::chrono::steady_clock;
  const auto start = Clock::now();

  TrainResult result;
  result.prompts = std::move(prompts);
  PolicyParams params = std::move(initial);
  const PolicyParams reference = params;
  OptimizerState optimizer{config.optimizer, 0, {}, {}};
  std::vector<double> baselines(static_cast<std::size_t>(config.prompt_count), 0.0);
  const std::span<const PromptInstance> prompt_span(result.prompts);

  auto snapshot = [&](int step) {
    return Checkpoint{step, result.prompts, params, optimizer, baselines};
  };
  EvalOptions eval_options = config.eval;
  eval_options.seed = config.seed;

  for (int step = 0; step <= config.steps; ++step) {
    // Checkpoints and evaluations describe the policy after `step` updates.
    if (step % config.checkpoint_every == 0 || step == config.steps) {
      result.checkpoints.push_back(snapshot(step));
      result.evaluations.push_back(evaluate(params, prompt_span, eval_options, step));
    }

    const PolicyParams old_params = params;
    const std::vector<int> ids = prompts_for_step(config, step);
    std::vector<RolloutGroup> groups = collect_rollouts(
        params, prompt_span, ids, config.group_size, config.train_temperature, config.seed, step);

    StepRecord record;
    record.step = step;
    const BatchStats stats = batch_stats(groups, step);
    record.correct_ratio = stats.correct_ratio;
    record.fully_solved_ratio = stats.fully_solved_ratio;
    const EntropyStats ent = entropy_stats(params, prompt_span, config.train_temperature);
    record.entropy = ent.per_token;
    record.sequence_entropy = ent.per_sequence;
    record.kl_to_ref = expected_token_kl(params, reference, prompt_span);
    for (const PromptInstance& p : result.prompts) {
      record.correct_mass += correct_mass(params, p, config.train_temperature);
    }
    record.correct_mass /= static_cast<double>(result.prompts.size());

    std::vector<ScoredGroup> batch;
    batch.reserve(groups.size());
    for (RolloutGroup& group : groups) {
      const AdvantageContext context{baselines[static_cast<std::size_t>(group.prompt_id)],
                                     &reference};
      batch.push_back(score_group(config.objective, std::move(group), context));
    }
    normalize_advantages(config.objective, batch);

    const ReferencePolicies refs{&old_params, &reference};
    const LossAndGradient full = evaluate_objective(config.objective, batch, params, refs);
    record.loss = full.loss;
    record.grad_norm = full.gradient.norm();
    if (!finite(full.loss) || !full.gradient.all_finite()) {
      throw TrainingAborted(fmt::format("non-finite loss or gradient at step {}", step),
                            snapshot(step), result.log);
    }

    if (step < config.steps) {
      if (config.objective.algorithm == Algorithm::kPpoLite) {
        for (const ScoredGroup& sg : batch) update_baseline(baselines, sg.group);
      }
      const auto minibatches = split_minibatches(batch, config.mini_batch_size);
      for (int epoch = 0; epoch < config.epochs; ++epoch) {
        for (const auto& mb : minibatches) {
          const LossAndGradient lg = evaluate_objective(config.objective, mb, params, refs);
          if (!finite(lg.loss) || !lg.gradient.all_finite()) {
            throw TrainingAborted(fmt::format("non-finite mini-batch gradient at step {}", step),
                                  snapshot(step), result.log);
          }
          record.clipped_tokens += lg.clipped_tokens;
          const PolicyParams before = params;
          apply_update(params, lg.gradient, optimizer, config.learning_rate);
          ++record.updates;
          if (!params.all_finite()) {
            Checkpoint diag{step, result.prompts, before, optimizer, baselines};
            throw TrainingAborted(fmt::format("non-finite parameters after update at step {}", step),
                                  std::move(diag), result.log);
          }
        }
      }
    }

    record.wall_time_s = std::chrono::duration<double>(Clock::now() - start).count();
    result.log.push_back(record);
  }
  result.final_params = params;
  return result;
}

TrainResult train(const TrainConfig& config) {
  config.validate();
  std::vector<PromptInstance> prompts = make_prompts(config);
  PolicyParams initial = make_initial_params(config, prompts);
  return train_from(config, std::move(prompts), std::move(initial));
}

SuiteResult run_experiment_suite(const TrainConfig& base, std::span<const Algorithm> algorithms) {
  base.validate();
  if (algorithms.empty()) throw ValidationError("suite needs at least one algorithm");
  const std::vector<PromptInstance> prompts = make_prompts(base);
  const PolicyParams initial = make_initial_params(base, prompts);
  SuiteResult suite;
  for (Algorithm algorithm : algorithms) {
    TrainConfig config = base;
    config.objective.algorithm = algorithm;
    suite.algorithms.push_back(algorithm);
    suite.runs.push_back(train_from(config, prompts, initial));
  }
  return suite;
}

}  // namespace rlvr
