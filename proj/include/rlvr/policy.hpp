#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "rlvr/rng.hpp"
#include "rlvr/tasks.hpp"

namespace rlvr {

// Dense tabular autoregressive policy: one logit vector of length vocab_size
// per (prompt, prefix) for every prefix of length 0..seq_len-1.
//
// Rows are laid out prompt-major; within a prompt, prefixes are ordered by
// length and then lexicographically, so row = prompt * prefixes_per_prompt +
// (V^0 + ... + V^(len-1)) + code(prefix).
class PolicyParams {
 public:
  PolicyParams() = default;
  PolicyParams(TaskSpec task, int num_prompts);

  const TaskSpec& task() const { return task_; }
  int num_prompts() const { return num_prompts_; }
  int vocab_size() const { return task_.vocab_size; }
  std::size_t prefixes_per_prompt() const { return prefixes_per_prompt_; }
  std::size_t num_rows() const { return prefixes_per_prompt_ * static_cast<std::size_t>(num_prompts_); }
  std::size_t size() const { return values_.size(); }

  // Throws ValidationError for an unknown (prompt, prefix) key.
  std::size_t row(int prompt_id, std::span<const Token> prefix) const;
  std::size_t row_offset(int prompt_id, int prefix_len, std::uint64_t prefix_code) const;

  struct RowKey {
    int prompt_id;
    Sequence prefix;
  };
  RowKey key(std::size_t row) const;

  std::span<double> logits(std::size_t row);
  std::span<const double> logits(std::size_t row) const;
  std::span<double> logits(int prompt_id, std::span<const Token> prefix) { return logits(row(prompt_id, prefix)); }
  std::span<const double> logits(int prompt_id, std::span<const Token> prefix) const {
    return logits(row(prompt_id, prefix));
  }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  bool all_finite() const;

  bool operator==(const PolicyParams&) const = default;

 private:
  TaskSpec task_;
  int num_prompts_ = 0;
  std::size_t prefixes_per_prompt_ = 0;
  std::vector<std::size_t> depth_offset_;  // first row of each prefix length
  std::vector<double> values_;
};

struct TokenDistribution {
  std::vector<double> probs;
  double temperature = 1.0;
};

// Numerically stable softmax of logits / temperature into out.
void softmax(std::span<const double> logits, double temperature, std::span<double> out);

struct Trajectory {
  int prompt_id = 0;
  Sequence tokens;
  std::vector<double> token_probs;  // sampled-token probability under the behavior policy
  int reward = 0;                   // 0 until verified, then -1 or +1
  int rollout_index = 0;
  std::uint64_t seed = 0;           // stream seed the trajectory was drawn from
};

enum class InitScheme { kUniform, kBiased };

std::string_view to_string(InitScheme scheme);
InitScheme parse_init_scheme(std::string_view name);

struct InitOptions {
  InitScheme scheme = InitScheme::kUniform;
  std::uint64_t seed = 0;
  double bias_strength = 0.0;
  double noise_scale = 1.0;   // stddev of the seeded Gaussian logits
  int favored_sequences = 1;  // correct sequences per prompt that receive the bias
};

// UNIFORM: all logits zero. BIASED: seeded N(0, noise_scale^2) logits, then
// +bias_strength added to every logit along the paths of `favored_sequences`
// seeded correct sequences of each prompt.
PolicyParams init_params(std::span<const PromptInstance> prompts, const InitOptions& options);

TokenDistribution token_distribution(const PolicyParams& params, int prompt_id,
                                     std::span<const Token> prefix, double temperature);

Trajectory sample_trajectory(const PolicyParams& params, const PromptInstance& prompt,
                             Rng& rng, double temperature);

double sequence_probability(const PolicyParams& params, const PromptInstance& prompt,
                            std::span<const Token> sequence, double temperature);

// Probability of every sequence, indexed by lexicographic code.
std::vector<double> sequence_probabilities(const PolicyParams& params, int prompt_id,
                                           double temperature);

std::vector<std::pair<Sequence, double>> enumerate_distribution(const PolicyParams& params,
                                                                const PromptInstance& prompt,
                                                                double temperature);

// Total probability of the prompt's correct set; equals exact Pass@1.
double correct_mass(const PolicyParams& params, const PromptInstance& prompt, double temperature);

struct EntropyStats {
  double per_token = 0.0;     // mean over prompts and positions, prefix-weighted
  double per_sequence = 0.0;  // mean over prompts of -sum_y P(y) ln P(y)
};

EntropyStats entropy_stats(const PolicyParams& params, std::span<const PromptInstance> prompts,
                           double temperature);

// Expected per-token entropy in nats.
double policy_entropy(const PolicyParams& params, std::span<const PromptInstance> prompts,
                      double temperature);

// Expected per-token KL(pi || pi_ref) under prefixes drawn from pi, averaged
// over prompts and positions, at temperature 1.
double expected_token_kl(const PolicyParams& params, const PolicyParams& ref_params,
                         std::span<const PromptInstance> prompts);

// -sum p ln p of a single distribution.
double entropy(std::span<const double> probs);

}  // namespace rlvr
