#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "rlvr/objectives.hpp"
#include "rlvr/policy.hpp"

namespace rlvr {

struct PassAtKQuery {
  int n = 0;  // samples drawn
  int c = 0;  // correct samples
  int k = 0;  // budget, 1 <= k <= n
};

// 1 - C(n-c, k) / C(n, k), evaluated as a telescoping product (no factorials).
double pass_at_k_unbiased(const PassAtKQuery& query);

// 1 - (1 - mass)^k.
double pass_at_k_from_mass(double correct_mass, int k);

double pass_at_k_exact(const PolicyParams& params, const PromptInstance& prompt, int k,
                       double temperature);

std::vector<int> doubling_k_list(int max_k);

struct PassCurveEstimate {
  std::vector<int> k_list;
  std::vector<double> estimate;         // mean over prompts
  std::vector<double> estimate_stderr;  // standard error across prompts
  std::vector<int> correct_counts;      // c per prompt
  int n = 0;
  std::uint64_t seed = 0;
};

PassCurveEstimate estimate_pass_curve(const PolicyParams& params,
                                      std::span<const PromptInstance> prompts, int n,
                                      std::span<const int> k_list, double temperature,
                                      std::uint64_t seed);

struct EvalOptions {
  int samples = 64;
  std::vector<int> k_list = doubling_k_list(64);
  double temperature = 0.6;
  std::uint64_t seed = 0;
};

struct EvalReport {
  int step = 0;
  double temperature = 0.6;
  std::vector<int> k_list;
  std::vector<double> exact;
  std::vector<double> exact_stderr;
  PassCurveEstimate estimated;
  EntropyStats entropy;
  std::vector<double> correct_mass;  // per prompt, at the evaluation temperature
};

EvalReport evaluate(const PolicyParams& params, std::span<const PromptInstance> prompts,
                    const EvalOptions& options, int step);

struct BatchStats {
  int step = 0;
  double correct_ratio = 0.0;
  double fully_solved_ratio = 0.0;
};

BatchStats batch_stats(std::span<const RolloutGroup> groups, int step = 0);

inline constexpr const char* kEvalSchema = "rlvr-eval/1";

nlohmann::json to_json(const EvalReport& report);

// Header line and column names; append rows with write_eval_csv_rows.
void write_eval_csv_header(std::ostream& out);
void write_eval_csv_rows(std::ostream& out, const EvalReport& report);

}  // namespace rlvr
