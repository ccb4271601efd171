#include "rlvr/policy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "rlvr/errors.hpp"

namespace rlvr {

PolicyParams::PolicyParams(TaskSpec task, int num_prompts)
    : task_(task), num_prompts_(num_prompts) {
  task_.validate();
  if (num_prompts < 1) throw ValidationError("policy needs at least one prompt");
  depth_offset_.resize(static_cast<std::size_t>(task_.seq_len) + 1);
  std::size_t level = 1;
  depth_offset_[0] = 0;
  for (int t = 0; t < task_.seq_len; ++t) {
    depth_offset_[t + 1] = depth_offset_[t] + level;
    level *= static_cast<std::size_t>(task_.vocab_size);
  }
  prefixes_per_prompt_ = depth_offset_.back();
  values_.assign(num_rows() * static_cast<std::size_t>(task_.vocab_size), 0.0);
}

std::size_t PolicyParams::row_offset(int prompt_id, int prefix_len,
                                     std::uint64_t prefix_code) const {
  return static_cast<std::size_t>(prompt_id) * prefixes_per_prompt_ +
         depth_offset_[static_cast<std::size_t>(prefix_len)] +
         static_cast<std::size_t>(prefix_code);
}

std::size_t PolicyParams::row(int prompt_id, std::span<const Token> prefix) const {
  if (prompt_id < 0 || prompt_id >= num_prompts_) {
    throw ValidationError(fmt::format("unknown prompt id {}", prompt_id));
  }
  if (static_cast<int>(prefix.size()) >= task_.seq_len) {
    throw ValidationError(fmt::format("prefix length {} must be < seq_len {}",
                                      prefix.size(), task_.seq_len));
  }
  for (Token token : prefix) {
    if (token < 0 || token >= task_.vocab_size) {
      throw ValidationError(fmt::format("prefix token {} out of range", token));
    }
  }
  return row_offset(prompt_id, static_cast<int>(prefix.size()),
                    encode_sequence(prefix, task_.vocab_size));
}

PolicyParams::RowKey PolicyParams::key(std::size_t row) const {
  const int prompt_id = static_cast<int>(row / prefixes_per_prompt_);
  const std::size_t within = row % prefixes_per_prompt_;
  const auto it = std::upper_bound(depth_offset_.begin(), depth_offset_.end(), within);
  const int len = static_cast<int>(it - depth_offset_.begin()) - 1;
  const std::uint64_t code = within - depth_offset_[static_cast<std::size_t>(len)];
  return {prompt_id, decode_sequence(code, task_.vocab_size, len)};
}

std::span<double> PolicyParams::logits(std::size_t row) {
  const auto v = static_cast<std::size_t>(task_.vocab_size);
  return std::span<double>(values_).subspan(row * v, v);
}

std::span<const double> PolicyParams::logits(std::size_t row) const {
  const auto v = static_cast<std::size_t>(task_.vocab_size);
  return std::span<const double>(values_).subspan(row * v, v);
}

bool PolicyParams::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double x) { return std::isfinite(x); });
}

void softmax(std::span<const double> logits, double temperature, std::span<double> out) {
  const double max_logit = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (std::size_t v = 0; v < logits.size(); ++v) {
    out[v] = std::exp((logits[v] - max_logit) / temperature);
    total += out[v];
  }
  for (double& p : out) p /= total;
}

std::string_view to_string(InitScheme scheme) {
  return scheme == InitScheme::kUniform ? "uniform" : "biased";
}

InitScheme parse_init_scheme(std::string_view name) {
  if (name == "uniform") return InitScheme::kUniform;
  if (name == "biased") return InitScheme::kBiased;
  throw ValidationError(fmt::format("unknown init scheme '{}'", name));
}

PolicyParams init_params(std::span<const PromptInstance> prompts, const InitOptions& options) {
  if (prompts.empty()) throw ValidationError("init_params needs at least one prompt");
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    if (prompts[i].prompt_id != static_cast<int>(i)) {
      throw ValidationError("prompt ids must be 0..count-1 in order");
    }
    if (!(prompts[i].task == prompts[0].task)) {
      throw ValidationError("all prompts must share one task spec");
    }
  }
  PolicyParams params(prompts[0].task, static_cast<int>(prompts.size()));
  if (options.scheme == InitScheme::kUniform) return params;

  if (!std::isfinite(options.bias_strength) || !(options.noise_scale >= 0.0)) {
    throw ValidationError("bias_strength must be finite and noise_scale >= 0");
  }
  Rng noise = substream(options.seed, {purpose_tag(StreamPurpose::kInit), 0});
  std::normal_distribution<double> gaussian(0.0, 1.0);
  for (double& z : params.values()) z = options.noise_scale * gaussian(noise);

  const TaskSpec& task = params.task();
  Rng direction = substream(options.seed, {purpose_tag(StreamPurpose::kInit), 1});
  for (const PromptInstance& prompt : prompts) {
    std::vector<std::uint64_t> codes = correct_codes(prompt);
    const int picks = std::min<int>(options.favored_sequences, static_cast<int>(codes.size()));
    // Partial Fisher-Yates: the first `picks` codes become the favored set.
    for (int i = 0; i < picks; ++i) {
      std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(i), codes.size() - 1);
      std::swap(codes[static_cast<std::size_t>(i)], codes[pick(direction)]);
      const Sequence favored = decode_sequence(codes[static_cast<std::size_t>(i)],
                                               task.vocab_size, task.seq_len);
      for (int t = 0; t < task.seq_len; ++t) {
        auto prefix = std::span<const Token>(favored).first(static_cast<std::size_t>(t));
        params.logits(prompt.prompt_id, prefix)[static_cast<std::size_t>(favored[t])] +=
            options.bias_strength;
      }
    }
  }
  return params;
}

namespace {

void check_temperature(double temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw ValidationError(fmt::format("temperature must be positive, got {}", temperature));
  }
}

}  // namespace

TokenDistribution token_distribution(const PolicyParams& params, int prompt_id,
                                     std::span<const Token> prefix, double temperature) {
  check_temperature(temperature);
  TokenDistribution dist;
  dist.temperature = temperature;
  dist.probs.resize(static_cast<std::size_t>(params.vocab_size()));
  softmax(params.logits(prompt_id, prefix), temperature, dist.probs);
  return dist;
}

Trajectory sample_trajectory(const PolicyParams& params, const PromptInstance& prompt,
                             Rng& rng, double temperature) {
  check_temperature(temperature);
  const TaskSpec& task = params.task();
  Trajectory traj;
  traj.prompt_id = prompt.prompt_id;
  traj.tokens.reserve(static_cast<std::size_t>(task.seq_len));
  traj.token_probs.reserve(static_cast<std::size_t>(task.seq_len));
  std::vector<double> probs(static_cast<std::size_t>(task.vocab_size));
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  for (int t = 0; t < task.seq_len; ++t) {
    softmax(params.logits(prompt.prompt_id, traj.tokens), temperature, probs);
    const double u = uniform(rng);
    double cumulative = 0.0;
    Token chosen = task.vocab_size - 1;
    for (int v = 0; v < task.vocab_size; ++v) {
      cumulative += probs[static_cast<std::size_t>(v)];
      if (u < cumulative) {
        chosen = v;
        break;
      }
    }
    // Guard against u landing in the rounding gap above the final cumulative sum.
    while (probs[static_cast<std::size_t>(chosen)] == 0.0 && chosen > 0) --chosen;
    traj.tokens.push_back(chosen);
    traj.token_probs.push_back(probs[static_cast<std::size_t>(chosen)]);
  }
  return traj;
}

double sequence_probability(const PolicyParams& params, const PromptInstance& prompt,
                            std::span<const Token> sequence, double temperature) {
  check_temperature(temperature);
  if (static_cast<int>(sequence.size()) != params.task().seq_len) {
    throw ValidationError(fmt::format("sequence length {} != seq_len {}", sequence.size(),
                                      params.task().seq_len));
  }
  std::vector<double> probs(static_cast<std::size_t>(params.vocab_size()));
  double product = 1.0;
  for (std::size_t t = 0; t < sequence.size(); ++t) {
    softmax(params.logits(prompt.prompt_id, sequence.first(t)), temperature, probs);
    const Token token = sequence[t];
    if (token < 0 || token >= params.vocab_size()) {
      throw ValidationError(fmt::format("token {} out of range", token));
    }
    product *= probs[static_cast<std::size_t>(token)];
  }
  return product;
}

namespace {

// Walks the prefix tree level by level. visit(depth, code, prefix_prob, probs)
// is called for every prefix; returns the leaf probabilities.
template <typename Visit>
std::vector<double> walk_prefix_tree(const PolicyParams& params, int prompt_id,
                                     double temperature, Visit&& visit) {
  const TaskSpec& task = params.task();
  task.sequence_count();
  if (prompt_id < 0 || prompt_id >= params.num_prompts()) {
    throw ValidationError(fmt::format("unknown prompt id {}", prompt_id));
  }
  const auto vocab = static_cast<std::size_t>(task.vocab_size);
  std::vector<double> level{1.0};
  std::vector<double> next;
  std::vector<double> probs(vocab);
  for (int depth = 0; depth < task.seq_len; ++depth) {
    next.assign(level.size() * vocab, 0.0);
    for (std::size_t code = 0; code < level.size(); ++code) {
      softmax(params.logits(params.row_offset(prompt_id, depth, code)), temperature, probs);
      visit(depth, code, level[code], std::span<const double>(probs));
      for (std::size_t v = 0; v < vocab; ++v) next[code * vocab + v] = level[code] * probs[v];
    }
    level.swap(next);
  }
  return level;
}

}  // namespace

std::vector<double> sequence_probabilities(const PolicyParams& params, int prompt_id,
                                           double temperature) {
  check_temperature(temperature);
  return walk_prefix_tree(params, prompt_id, temperature,
                          [](int, std::size_t, double, std::span<const double>) {});
}

std::vector<std::pair<Sequence, double>> enumerate_distribution(const PolicyParams& params,
                                                                const PromptInstance& prompt,
                                                                double temperature) {
  const std::vector<double> probs = sequence_probabilities(params, prompt.prompt_id, temperature);
  std::vector<std::pair<Sequence, double>> result;
  result.reserve(probs.size());
  for (std::size_t code = 0; code < probs.size(); ++code) {
    result.emplace_back(decode_sequence(code, params.vocab_size(), params.task().seq_len),
                        probs[code]);
  }
  return result;
}

double correct_mass(const PolicyParams& params, const PromptInstance& prompt, double temperature) {
  const std::vector<double> probs = sequence_probabilities(params, prompt.prompt_id, temperature);
  double mass = 0.0;
  for (std::uint64_t code : correct_codes(prompt)) mass += probs[code];
  return std::min(mass, 1.0);
}

double entropy(std::span<const double> probs) {
  double h = 0.0;
  for (double p : probs) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

EntropyStats entropy_stats(const PolicyParams& params, std::span<const PromptInstance> prompts,
                           double temperature) {
  check_temperature(temperature);
  if (prompts.empty()) throw ValidationError("entropy needs at least one prompt");
  const int seq_len = params.task().seq_len;
  EntropyStats stats;
  for (const PromptInstance& prompt : prompts) {
    double expected_sum = 0.0;  // sum over positions of E_prefix[H]
    walk_prefix_tree(params, prompt.prompt_id, temperature,
                     [&](int, std::size_t, double prefix_prob, std::span<const double> probs) {
                       expected_sum += prefix_prob * entropy(probs);
                     });
    stats.per_token += expected_sum / seq_len;
    // Chain rule: sequence entropy is the sum of expected per-position entropies.
    stats.per_sequence += expected_sum;
  }
  stats.per_token /= static_cast<double>(prompts.size());
  stats.per_sequence /= static_cast<double>(prompts.size());
  return stats;
}

double expected_token_kl(const PolicyParams& params, const PolicyParams& ref_params,
                         std::span<const PromptInstance> prompts) {
  if (!(params.task() == ref_params.task()) || params.size() != ref_params.size()) {
    throw ValidationError("expected_token_kl: policies differ in shape");
  }
  if (prompts.empty()) throw ValidationError("expected_token_kl needs at least one prompt");
  std::vector<double> ref(static_cast<std::size_t>(params.vocab_size()));
  double total = 0.0;
  for (const PromptInstance& prompt : prompts) {
    double sum = 0.0;
    walk_prefix_tree(params, prompt.prompt_id, 1.0,
                     [&](int depth, std::size_t code, double prefix_prob,
                         std::span<const double> probs) {
                       softmax(ref_params.logits(ref_params.row_offset(prompt.prompt_id, depth, code)),
                               1.0, ref);
                       double kl = 0.0;
                       for (std::size_t v = 0; v < probs.size(); ++v) {
                         if (probs[v] > 0.0) kl += probs[v] * (std::log(probs[v]) - std::log(ref[v]));
                       }
                       sum += prefix_prob * kl;
                     });
    total += sum / params.task().seq_len;
  }
  return std::max(total / static_cast<double>(prompts.size()), 0.0);
}

double policy_entropy(const PolicyParams& params, std::span<const PromptInstance> prompts,
                      double temperature) {
  return entropy_stats(params, prompts, temperature).per_token;
}

}  // namespace rlvr
