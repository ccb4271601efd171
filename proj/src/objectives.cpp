#include "rlvr/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "rlvr/errors.hpp"

namespace rlvr {

std::string_view to_string(Algorithm algorithm) {
  switch (algorithm) {
    case Algorithm::kPsr:
      return "psr";
    case Algorithm::kNsr:
      return "nsr";
    case Algorithm::kReinforce:
      return "reinforce";
    case Algorithm::kWReinforce:
      return "w_reinforce";
    case Algorithm::kGrpo:
      return "grpo";
    case Algorithm::kPpoLite:
      return "ppo_lite";
  }
  return "unknown";
}

Algorithm parse_algorithm(std::string_view name) {
  for (Algorithm a : kAllAlgorithms) {
    if (to_string(a) == name) return a;
  }
  throw ValidationError(fmt::format("unknown algorithm '{}'", name));
}

void ObjectiveConfig::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ValidationError("lambda must be >= 0");
  if (!(clip_epsilon > 0.0) || !std::isfinite(clip_epsilon)) {
    throw ValidationError("clip_epsilon must be > 0");
  }
  if (!(kl_beta >= 0.0) || !std::isfinite(kl_beta)) throw ValidationError("kl_beta must be >= 0");
  if (!(entropy_coef >= 0.0) || !std::isfinite(entropy_coef)) {
    throw ValidationError("entropy_coef must be >= 0");
  }
}

double ObjectiveConfig::effective_kl_beta() const {
  return (algorithm == Algorithm::kGrpo || algorithm == Algorithm::kPpoLite) ? kl_beta : 0.0;
}

bool ObjectiveConfig::effective_advantage_normalization() const {
  return advantage_normalization &&
         (algorithm == Algorithm::kReinforce || algorithm == Algorithm::kPpoLite);
}

bool ObjectiveConfig::requires_old_params() const {
  return algorithm == Algorithm::kGrpo || algorithm == Algorithm::kPpoLite;
}

GradientTable::GradientTable(const PolicyParams& shape)
    : table_(shape.task(), shape.num_prompts()) {}

double GradientTable::norm() const {
  double sum = 0.0;
  for (double g : table_.values()) sum += g * g;
  return std::sqrt(sum);
}

GradientTable& GradientTable::operator+=(const GradientTable& other) {
  if (other.size() != size()) throw ValidationError("gradient tables differ in shape");
  auto dst = values();
  auto src = other.values();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  return *this;
}

std::pair<std::vector<Trajectory>, std::vector<Trajectory>> split_by_reward(
    const RolloutGroup& group) {
  std::pair<std::vector<Trajectory>, std::vector<Trajectory>> parts;
  for (const Trajectory& traj : group.trajectories) {
    if (traj.reward == 1) {
      parts.first.push_back(traj);
    } else if (traj.reward == -1) {
      parts.second.push_back(traj);
    } else {
      throw ValidationError("split_by_reward: trajectory has no verified reward");
    }
  }
  return parts;
}

namespace {

void check_group(const RolloutGroup& group) {
  if (group.trajectories.empty()) throw ValidationError("rollout group is empty");
  for (const Trajectory& traj : group.trajectories) {
    if (traj.prompt_id != group.prompt_id) {
      throw ValidationError("rollout group mixes prompts");
    }
    if (traj.reward != 1 && traj.reward != -1) {
      throw ValidationError("rollout group has an unverified reward");
    }
    if (traj.tokens.size() != traj.token_probs.size()) {
      throw ValidationError("trajectory tokens and token_probs differ in length");
    }
  }
}

}  // namespace

AdvantageSet compute_advantages(const ObjectiveConfig& config, const RolloutGroup& group,
                                const AdvantageContext& context) {
  check_group(group);
  const std::size_t n = group.trajectories.size();
  AdvantageSet out;
  out.per_token.resize(n);
  out.active.assign(n, 1);

  auto broadcast = [&](std::size_t i, double value) {
    out.per_token[i].assign(group.trajectories[i].tokens.size(), value);
  };

  switch (config.algorithm) {
    case Algorithm::kPsr:
    case Algorithm::kNsr: {
      const int keep = config.algorithm == Algorithm::kPsr ? 1 : -1;
      for (std::size_t i = 0; i < n; ++i) {
        const int r = group.trajectories[i].reward;
        out.active[i] = r == keep ? 1 : 0;
        broadcast(i, r == keep ? static_cast<double>(r) : 0.0);
      }
      break;
    }
    case Algorithm::kReinforce:
      for (std::size_t i = 0; i < n; ++i) broadcast(i, group.trajectories[i].reward);
      break;
    case Algorithm::kWReinforce:
      for (std::size_t i = 0; i < n; ++i) {
        const int r = group.trajectories[i].reward;
        broadcast(i, r == 1 ? config.lambda : -1.0);
      }
      break;
    case Algorithm::kGrpo: {
      double mean = 0.0;
      for (const Trajectory& t : group.trajectories) mean += t.reward;
      mean /= static_cast<double>(n);
      double var = 0.0;
      for (const Trajectory& t : group.trajectories) var += (t.reward - mean) * (t.reward - mean);
      const double std_dev = std::sqrt(var / static_cast<double>(n));
      for (std::size_t i = 0; i < n; ++i) {
        // Identical rewards carry no relative signal.
        broadcast(i, std_dev > 0.0 ? (group.trajectories[i].reward - mean) / std_dev : 0.0);
      }
      break;
    }
    case Algorithm::kPpoLite: {
      const double beta = config.effective_kl_beta();
      if (beta > 0.0 && context.ref_params == nullptr) {
        throw ValidationError("ppo_lite KL penalty needs a reference policy");
      }
      std::vector<double> ref_probs;
      for (std::size_t i = 0; i < n; ++i) {
        const Trajectory& traj = group.trajectories[i];
        const std::size_t len = traj.tokens.size();
        std::vector<double> penalty(len, 0.0);
        if (beta > 0.0) {
          ref_probs.resize(static_cast<std::size_t>(context.ref_params->vocab_size()));
          for (std::size_t t = 0; t < len; ++t) {
            softmax(context.ref_params->logits(traj.prompt_id,
                                               std::span<const Token>(traj.tokens).first(t)),
                    1.0, ref_probs);
            const double ref = ref_probs[static_cast<std::size_t>(traj.tokens[t])];
            penalty[t] = beta * (std::log(traj.token_probs[t]) - std::log(ref));
          }
        }
        // Reward-to-go with the terminal verifier reward and per-token KL penalties.
        out.per_token[i].assign(len, 0.0);
        double to_go = traj.reward;
        for (std::size_t t = len; t-- > 0;) {
          to_go -= penalty[t];
          out.per_token[i][t] = to_go - context.baseline;
        }
      }
      break;
    }
  }
  return out;
}

void normalize_advantages(const ObjectiveConfig& config, std::span<ScoredGroup> batch) {
  if (!config.effective_advantage_normalization()) return;
  double sum = 0.0;
  std::size_t count = 0;
  for (const ScoredGroup& sg : batch) {
    for (std::size_t i = 0; i < sg.advantages.per_token.size(); ++i) {
      if (!sg.advantages.active[i]) continue;
      for (double a : sg.advantages.per_token[i]) {
        sum += a;
        ++count;
      }
    }
  }
  if (count == 0) return;
  const double mean = sum / static_cast<double>(count);
  for (ScoredGroup& sg : batch) {
    for (std::size_t i = 0; i < sg.advantages.per_token.size(); ++i) {
      if (!sg.advantages.active[i]) continue;
      for (double& a : sg.advantages.per_token[i]) a -= mean;
    }
  }
}

ScoredGroup score_group(const ObjectiveConfig& config, RolloutGroup group,
                        const AdvantageContext& context) {
  AdvantageSet advantages = compute_advantages(config, group, context);
  return {std::move(group), std::move(advantages)};
}

LossAndGradient evaluate_objective(const ObjectiveConfig& config,
                                   std::span<const ScoredGroup> batch,
                                   const PolicyParams& params, const ReferencePolicies& refs) {
  config.validate();
  if (config.requires_old_params() && refs.old_params == nullptr) {
    throw ValidationError(fmt::format("{} needs an old-policy snapshot", to_string(config.algorithm)));
  }
  const double kl_beta = config.algorithm == Algorithm::kGrpo ? config.effective_kl_beta() : 0.0;
  if (kl_beta > 0.0 && refs.ref_params == nullptr) {
    throw ValidationError("grpo KL term needs a reference policy");
  }

  LossAndGradient result;
  result.gradient = GradientTable(params);

  std::size_t batch_size = 0;
  for (const ScoredGroup& sg : batch) {
    if (sg.advantages.per_token.size() != sg.group.trajectories.size() ||
        sg.advantages.active.size() != sg.group.trajectories.size()) {
      throw ValidationError("advantage set does not match its rollout group");
    }
    batch_size += sg.group.trajectories.size();
  }
  if (batch_size == 0) return result;

  const auto vocab = static_cast<std::size_t>(params.vocab_size());
  const double eps = config.clip_epsilon;
  std::vector<double> probs(vocab), old_probs(vocab), ref_probs(vocab);

  for (const ScoredGroup& sg : batch) {
    for (std::size_t i = 0; i < sg.group.trajectories.size(); ++i) {
      if (!sg.advantages.active[i]) continue;
      const Trajectory& traj = sg.group.trajectories[i];
      const std::size_t len = traj.tokens.size();
      const double scale = 1.0 / (static_cast<double>(batch_size) * static_cast<double>(len));
      for (std::size_t t = 0; t < len; ++t) {
        const auto prefix = std::span<const Token>(traj.tokens).first(t);
        const std::size_t row = params.row(traj.prompt_id, prefix);
        softmax(params.logits(row), 1.0, probs);
        const auto y = static_cast<std::size_t>(traj.tokens[t]);
        double pi_old = traj.token_probs[t];
        if (refs.old_params != nullptr) {
          softmax(refs.old_params->logits(row), 1.0, old_probs);
          pi_old = old_probs[y];
        }
        auto grad = result.gradient.row(row);

        // Likelihood surrogate with a clipped ratio: pi_old * min(rho A, clip(rho) A).
        // At rho = 1 this is A * pi(y_t), so its gradient is the token-level
        // A * pi_y (1[v=y] - pi_v) form.
        const double advantage = sg.advantages.per_token[i][t];
        const double rho = probs[y] / pi_old;
        const double unclipped = rho * advantage;
        const double clipped = std::clamp(rho, 1.0 - eps, 1.0 + eps) * advantage;
        ++result.total_tokens;
        if (unclipped <= clipped) {
          result.loss -= scale * pi_old * unclipped;
          for (std::size_t v = 0; v < vocab; ++v) {
            const double dpi = probs[y] * ((v == y ? 1.0 : 0.0) - probs[v]);
            grad[v] -= scale * advantage * dpi;
          }
        } else {
          result.loss -= scale * pi_old * clipped;
          ++result.clipped_tokens;
        }

        if (config.entropy_coef > 0.0) {
          double mean_log = 0.0;
          for (double p : probs) {
            if (p > 0.0) mean_log += p * std::log(p);
          }
          result.loss -= scale * config.entropy_coef * (-mean_log);
          for (std::size_t v = 0; v < vocab; ++v) {
            if (probs[v] > 0.0) {
              grad[v] += scale * config.entropy_coef * probs[v] * (std::log(probs[v]) - mean_log);
            }
          }
        }

        if (kl_beta > 0.0) {
          softmax(refs.ref_params->logits(row), 1.0, ref_probs);
          const double kl = kl_divergence(probs, ref_probs);
          result.loss += scale * kl_beta * kl;
          for (std::size_t v = 0; v < vocab; ++v) {
            if (probs[v] > 0.0) {
              grad[v] += scale * kl_beta * probs[v] *
                         (std::log(probs[v]) - std::log(ref_probs[v]) - kl);
            }
          }
        }
      }
    }
  }
  return result;
}

double surrogate_loss(const ObjectiveConfig& config, std::span<const ScoredGroup> batch,
                      const PolicyParams& params, const ReferencePolicies& refs) {
  return evaluate_objective(config, batch, params, refs).loss;
}

GradientTable loss_gradient(const ObjectiveConfig& config, std::span<const ScoredGroup> batch,
                            const PolicyParams& params, const ReferencePolicies& refs) {
  return evaluate_objective(config, batch, params, refs).gradient;
}

std::vector<double> normalize_batch_rewards(std::span<const int> rewards) {
  if (rewards.empty()) throw ValidationError("normalize_batch_rewards: empty batch");
  double mean = 0.0;
  for (int r : rewards) {
    if (r != 1 && r != -1) throw ValidationError("normalize_batch_rewards: rewards must be +-1");
    mean += r;
  }
  mean /= static_cast<double>(rewards.size());
  std::vector<double> out;
  out.reserve(rewards.size());
  for (int r : rewards) out.push_back(r - mean);
  return out;
}

void update_baseline(std::vector<double>& baselines, const RolloutGroup& group) {
  check_group(group);
  if (group.prompt_id < 0) throw ValidationError("negative prompt id");
  const auto id = static_cast<std::size_t>(group.prompt_id);
  if (baselines.size() <= id) baselines.resize(id + 1, 0.0);
  double mean = 0.0;
  for (const Trajectory& t : group.trajectories) mean += t.reward;
  mean /= static_cast<double>(group.trajectories.size());
  baselines[id] = kBaselineDecay * baselines[id] + (1.0 - kBaselineDecay) * mean;
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  double kl = 0.0;
  for (std::size_t v = 0; v < p.size(); ++v) {
    if (p[v] > 0.0) kl += p[v] * (std::log(p[v]) - std::log(q[v]));
  }
  return std::max(kl, 0.0);
}

double kl_exact(const PolicyParams& params, const PolicyParams& ref_params,
                std::span<const std::size_t> rows) {
  if (params.size() != ref_params.size() || !(params.task() == ref_params.task())) {
    throw ValidationError("kl_exact: policies differ in shape");
  }
  const auto vocab = static_cast<std::size_t>(params.vocab_size());
  std::vector<double> p(vocab), q(vocab);
  double total = 0.0;
  for (std::size_t row : rows) {
    if (row >= params.num_rows()) throw ValidationError("kl_exact: row out of range");
    softmax(params.logits(row), 1.0, p);
    softmax(ref_params.logits(row), 1.0, q);
    total += kl_divergence(p, q);
  }
  return total;
}

}  // namespace rlvr
