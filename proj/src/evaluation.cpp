#include "rlvr/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include <fmt/format.h>

#include "rlvr/errors.hpp"
#include "rlvr/rng.hpp"

namespace rlvr {

double pass_at_k_unbiased(const PassAtKQuery& q) {
  if (q.n < 1 || q.c < 0 || q.c > q.n || q.k < 1 || q.k > q.n) {
    throw ValidationError(fmt::format("invalid pass@k query n={} c={} k={}", q.n, q.c, q.k));
  }
  if (q.n - q.c < q.k) return 1.0;
  // C(n-c, k) / C(n, k) = prod_{i=n-c+1}^{n} (1 - k / i)
  double ratio = 1.0;
  for (int i = q.n - q.c + 1; i <= q.n; ++i) ratio *= 1.0 - static_cast<double>(q.k) / i;
  return 1.0 - ratio;
}

double pass_at_k_from_mass(double correct_mass, int k) {
  if (k < 1) throw ValidationError("k must be >= 1");
  const double miss = std::clamp(1.0 - correct_mass, 0.0, 1.0);
  return 1.0 - std::pow(miss, k);
}

double pass_at_k_exact(const PolicyParams& params, const PromptInstance& prompt, int k,
                       double temperature) {
  return pass_at_k_from_mass(correct_mass(params, prompt, temperature), k);
}

std::vector<int> doubling_k_list(int max_k) {
  std::vector<int> ks;
  for (int k = 1; k <= max_k; k *= 2) ks.push_back(k);
  return ks;
}

namespace {

double stderr_of(std::span<const double> values) {
  if (values.size() < 2) return 0.0;
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double var = ss / static_cast<double>(values.size() - 1);
  return std::sqrt(var / static_cast<double>(values.size()));
}

}  // namespace

PassCurveEstimate estimate_pass_curve(const PolicyParams& params,
                                      std::span<const PromptInstance> prompts, int n,
                                      std::span<const int> k_list, double temperature,
                                      std::uint64_t seed) {
  if (prompts.empty()) throw ValidationError("estimate_pass_curve needs prompts");
  if (k_list.empty()) throw ValidationError("k_list is empty");
  const int max_k = *std::max_element(k_list.begin(), k_list.end());
  if (n < max_k) {
    throw ValidationError(fmt::format("n={} samples is fewer than max k={}", n, max_k));
  }
  PassCurveEstimate out;
  out.k_list.assign(k_list.begin(), k_list.end());
  out.n = n;
  out.seed = seed;
  for (const PromptInstance& prompt : prompts) {
    int correct = 0;
    for (int s = 0; s < n; ++s) {
      Rng rng = substream(seed, {purpose_tag(StreamPurpose::kEvaluation),
                                 static_cast<std::uint64_t>(prompt.prompt_id),
                                 static_cast<std::uint64_t>(s)});
      const Trajectory traj = sample_trajectory(params, prompt, rng, temperature);
      if (verify(prompt, traj.tokens) == 1) ++correct;
    }
    out.correct_counts.push_back(correct);
  }
  std::vector<double> per_prompt(prompts.size());
  for (int k : k_list) {
    for (std::size_t p = 0; p < prompts.size(); ++p) {
      per_prompt[p] = pass_at_k_unbiased({n, out.correct_counts[p], k});
    }
    double mean = 0.0;
    for (double v : per_prompt) mean += v;
    out.estimate.push_back(mean / static_cast<double>(prompts.size()));
    out.estimate_stderr.push_back(stderr_of(per_prompt));
  }
  return out;
}

EvalReport evaluate(const PolicyParams& params, std::span<const PromptInstance> prompts,
                    const EvalOptions& options, int step) {
  EvalReport report;
  report.step = step;
  report.temperature = options.temperature;
  report.k_list = options.k_list;
  for (const PromptInstance& prompt : prompts) {
    report.correct_mass.push_back(correct_mass(params, prompt, options.temperature));
  }
  std::vector<double> per_prompt(prompts.size());
  for (int k : options.k_list) {
    double mean = 0.0;
    for (std::size_t p = 0; p < prompts.size(); ++p) {
      per_prompt[p] = pass_at_k_from_mass(report.correct_mass[p], k);
      mean += per_prompt[p];
    }
    report.exact.push_back(mean / static_cast<double>(prompts.size()));
    report.exact_stderr.push_back(stderr_of(per_prompt));
  }
  report.estimated = estimate_pass_curve(params, prompts, options.samples, options.k_list,
                                         options.temperature, options.seed);
  report.entropy = entropy_stats(params, prompts, options.temperature);
  return report;
}

BatchStats batch_stats(std::span<const RolloutGroup> groups, int step) {
  BatchStats stats;
  stats.step = step;
  if (groups.empty()) return stats;
  std::size_t correct = 0, total = 0, solved = 0;
  for (const RolloutGroup& group : groups) {
    bool all_correct = !group.trajectories.empty();
    for (const Trajectory& t : group.trajectories) {
      ++total;
      if (t.reward == 1) {
        ++correct;
      } else {
        all_correct = false;
      }
    }
    if (all_correct) ++solved;
  }
  stats.correct_ratio = total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
  stats.fully_solved_ratio = static_cast<double>(solved) / static_cast<double>(groups.size());
  return stats;
}

nlohmann::json to_json(const EvalReport& report) {
  nlohmann::json j;
  j["schema"] = kEvalSchema;
  j["step"] = report.step;
  j["temperature"] = report.temperature;
  j["k"] = report.k_list;
  j["pass_at_k_exact"] = report.exact;
  j["pass_at_k_exact_stderr"] = report.exact_stderr;
  j["pass_at_k_estimate"] = report.estimated.estimate;
  j["pass_at_k_estimate_stderr"] = report.estimated.estimate_stderr;
  j["samples_per_prompt"] = report.estimated.n;
  j["sample_seed"] = report.estimated.seed;
  j["correct_counts"] = report.estimated.correct_counts;
  j["entropy_per_token"] = report.entropy.per_token;
  j["entropy_per_sequence"] = report.entropy.per_sequence;
  j["correct_mass"] = report.correct_mass;
  return j;
}

void write_eval_csv_header(std::ostream& out) {
  out << "# schema=" << kEvalSchema << '\n';
  out << "step,k,exact,estimate,stderr\n";
}

void write_eval_csv_rows(std::ostream& out, const EvalReport& report) {
  for (std::size_t i = 0; i < report.k_list.size(); ++i) {
    out << fmt::format("{},{},{:.17g},{:.17g},{:.17g}\n", report.step, report.k_list[i],
                       report.exact[i], report.estimated.estimate[i],
                       report.estimated.estimate_stderr[i]);
  }
}

}  // namespace rlvr
