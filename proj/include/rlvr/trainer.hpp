#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "rlvr/evaluation.hpp"
#include "rlvr/objectives.hpp"
#include "rlvr/policy.hpp"
#include "rlvr/tasks.hpp"

namespace rlvr {

enum class OptimizerKind { kSgd, kAdam };

std::string_view to_string(OptimizerKind kind);
OptimizerKind parse_optimizer(std::string_view name);

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEpsilon = 1e-8;

struct OptimizerState {
  OptimizerKind kind = OptimizerKind::kSgd;
  std::int64_t step = 0;
  std::vector<double> first_moment;   // Adam only
  std::vector<double> second_moment;  // Adam only

  bool operator==(const OptimizerState&) const = default;
};

// SGD: z <- z - lr g. Adam: bias-corrected moment update with the constants above.
void apply_update(PolicyParams& params, const GradientTable& gradient, OptimizerState& state,
                  double learning_rate);

struct TrainConfig {
  TaskSpec task;
  int prompt_count = 16;
  int group_size = 8;
  int prompts_per_step = 16;
  int mini_batch_size = 32;
  int epochs = 1;  // gradient passes over each rollout batch
  int steps = 200;
  double learning_rate = 1e-2;
  OptimizerKind optimizer = OptimizerKind::kSgd;
  double train_temperature = 1.0;
  ObjectiveConfig objective;
  InitOptions init;
  std::uint64_t seed = 0;
  int checkpoint_every = 10;
  EvalOptions eval;
  bool log_wall_time = false;

  void validate() const;
};

struct StepRecord {
  int step = 0;
  double loss = 0.0;
  double entropy = 0.0;           // exact per-token entropy at the training temperature
  double sequence_entropy = 0.0;  // exact per-sequence entropy at the training temperature
  double correct_ratio = 0.0;
  double fully_solved_ratio = 0.0;
  double grad_norm = 0.0;
  double kl_to_ref = 0.0;         // exact expected per-token KL to the initial policy
  double correct_mass = 0.0;      // exact mean correct mass at the training temperature
  int clipped_tokens = 0;
  int updates = 0;
  double wall_time_s = 0.0;
};

inline constexpr const char* kTrainLogSchema = "rlvr-trainlog/1";

nlohmann::json to_json(const StepRecord& record, bool include_wall_time);
StepRecord step_record_from_json(const nlohmann::json& j);

struct Checkpoint {
  int step = 0;
  std::vector<PromptInstance> prompts;
  PolicyParams params;
  OptimizerState optimizer;
  std::vector<double> baselines;

  bool operator==(const Checkpoint&) const = default;
};

struct TrainResult {
  PolicyParams final_params;
  std::vector<PromptInstance> prompts;
  std::vector<StepRecord> log;
  std::vector<Checkpoint> checkpoints;
  std::vector<EvalReport> evaluations;
};

// Thrown when a loss, gradient or parameter goes non-finite; carries the last
// finite state for diagnosis.
class TrainingAborted : public std::runtime_error {
 public:
  TrainingAborted(const std::string& what, Checkpoint diagnostic, std::vector<StepRecord> log)
      : std::runtime_error(what), diagnostic_(std::move(diagnostic)), log_(std::move(log)) {}

  const Checkpoint& diagnostic() const { return diagnostic_; }
  const std::vector<StepRecord>& log() const { return log_; }

 private:
  Checkpoint diagnostic_;
  std::vector<StepRecord> log_;
};

std::vector<PromptInstance> make_prompts(const TrainConfig& config);
PolicyParams make_initial_params(const TrainConfig& config, std::span<const PromptInstance> prompts);

// Samples group_size rollouts per prompt from `params` and verifies them.
std::vector<RolloutGroup> collect_rollouts(const PolicyParams& params,
                                           std::span<const PromptInstance> prompts,
                                           std::span<const int> prompt_ids, int group_size,
                                           double temperature, std::uint64_t seed, int step);

// Indices of the prompts used at `step`: a rotating window of prompts_per_step.
std::vector<int> prompts_for_step(const TrainConfig& config, int step);

// Runs `steps` updates. Log record s describes the policy after s updates and
// the rollout batch sampled from it; steps + 1 records in total.
TrainResult train(const TrainConfig& config);

// Same as train() but starting from given prompts and parameters.
TrainResult train_from(const TrainConfig& config, std::vector<PromptInstance> prompts,
                       PolicyParams initial);

struct SuiteResult {
  std::vector<Algorithm> algorithms;
  std::vector<TrainResult> runs;
};

// Trains each algorithm from the same prompts, initial policy and seed.
SuiteResult run_experiment_suite(const TrainConfig& base, std::span<const Algorithm> algorithms);

}  // namespace rlvr
