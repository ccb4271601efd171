#pragma once

#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "rlvr/policy.hpp"

namespace rlvr {

enum class Algorithm { kPsr, kNsr, kReinforce, kWReinforce, kGrpo, kPpoLite };

inline constexpr Algorithm kAllAlgorithms[] = {Algorithm::kPsr,        Algorithm::kNsr,
                                               Algorithm::kReinforce,  Algorithm::kWReinforce,
                                               Algorithm::kGrpo,       Algorithm::kPpoLite};

std::string_view to_string(Algorithm algorithm);
Algorithm parse_algorithm(std::string_view name);

struct ObjectiveConfig {
  Algorithm algorithm = Algorithm::kReinforce;
  double lambda = 0.1;           // positive-sample weight, W_REINFORCE only
  double clip_epsilon = 0.2;
  double kl_beta = 1e-3;         // GRPO (loss term) and PPO_LITE (reward penalty) only
  double entropy_coef = 1e-4;
  bool advantage_normalization = false;

  void validate() const;

  double effective_kl_beta() const;
  // Batch mean-centering of advantages; never applied to PSR, NSR, W_REINFORCE
  // or GRPO (which normalizes per group instead).
  bool effective_advantage_normalization() const;
  // True when the loss reads pi_old from an old-policy snapshot.
  bool requires_old_params() const;
};

struct RolloutGroup {
  int prompt_id = 0;
  std::vector<Trajectory> trajectories;
};

// Per-token advantages plus an inclusion mask. PSR and NSR mask out the
// trajectories of the other sign; masked trajectories contribute nothing to
// the loss but still count towards the batch size.
struct AdvantageSet {
  std::vector<std::vector<double>> per_token;
  std::vector<char> active;
};

struct ScoredGroup {
  RolloutGroup group;
  AdvantageSet advantages;
};

struct ReferencePolicies {
  const PolicyParams* old_params = nullptr;  // pi_old for probability ratios
  const PolicyParams* ref_params = nullptr;  // pi_ref for the KL penalty
};

// Per-logit partial derivatives of a scalar loss, laid out like PolicyParams.
class GradientTable {
 public:
  GradientTable() = default;
  explicit GradientTable(const PolicyParams& shape);

  std::span<double> row(std::size_t r) { return table_.logits(r); }
  std::span<const double> row(std::size_t r) const { return table_.logits(r); }
  std::span<double> values() { return table_.values(); }
  std::span<const double> values() const { return table_.values(); }
  std::size_t size() const { return table_.size(); }
  const PolicyParams& layout() const { return table_; }

  double norm() const;
  bool all_finite() const { return table_.all_finite(); }
  GradientTable& operator+=(const GradientTable& other);

 private:
  PolicyParams table_;
};

std::pair<std::vector<Trajectory>, std::vector<Trajectory>> split_by_reward(
    const RolloutGroup& group);

struct AdvantageContext {
  double baseline = 0.0;                     // PPO_LITE per-prompt baseline
  const PolicyParams* ref_params = nullptr;  // PPO_LITE KL reward penalty
};

AdvantageSet compute_advantages(const ObjectiveConfig& config, const RolloutGroup& group,
                                const AdvantageContext& context = {});

// Subtracts the batch mean of active advantages when the config enables it.
void normalize_advantages(const ObjectiveConfig& config, std::span<ScoredGroup> batch);

ScoredGroup score_group(const ObjectiveConfig& config, RolloutGroup group,
                        const AdvantageContext& context = {});

double surrogate_loss(const ObjectiveConfig& config, std::span<const ScoredGroup> batch,
                      const PolicyParams& params, const ReferencePolicies& refs);

GradientTable loss_gradient(const ObjectiveConfig& config, std::span<const ScoredGroup> batch,
                            const PolicyParams& params, const ReferencePolicies& refs);

struct LossAndGradient {
  double loss = 0.0;
  GradientTable gradient;
  int clipped_tokens = 0;
  int total_tokens = 0;
};

LossAndGradient evaluate_objective(const ObjectiveConfig& config,
                                   std::span<const ScoredGroup> batch,
                                   const PolicyParams& params, const ReferencePolicies& refs);

std::vector<double> normalize_batch_rewards(std::span<const int> rewards);

// Per-prompt EMA of group mean reward, decay 0.9, starting at 0.
inline constexpr double kBaselineDecay = 0.9;
void update_baseline(std::vector<double>& baselines, const RolloutGroup& group);

// KL(pi || pi_ref) summed over the given rows, at temperature 1.
double kl_exact(const PolicyParams& params, const PolicyParams& ref_params,
                std::span<const std::size_t> rows);

double kl_divergence(std::span<const double> p, std::span<const double> q);

}  // namespace rlvr
