#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace rlvr {

// Descent direction -dL/dz of L = -pi_s: pi_s (1[v = s] - pi_v).
std::vector<double> analytic_psr_grad(std::span<const double> probs, int sampled);

// Descent direction of L = +pi_s; the exact negation of analytic_psr_grad.
std::vector<double> analytic_nsr_grad(std::span<const double> probs, int sampled);

// Ascent direction of H = -sum pi ln pi: -pi_v (ln pi_v - sum pi ln pi).
std::vector<double> analytic_entropy_grad(std::span<const double> probs);

using ScalarFunction = std::function<double(std::span<const double>)>;

// Central differences (f(z + h e_i) - f(z - h e_i)) / 2h for every coordinate.
std::vector<double> finite_difference_grad(const ScalarFunction& f, std::span<const double> point,
                                           double step = 1e-5);

// Same differences evaluated in long double. The suite's oracles use this so
// round-off stays far below the tolerance even for components near 1e-8.
using ExtendedScalarFunction = std::function<long double(std::span<const long double>)>;
std::vector<double> finite_difference_grad_extended(const ExtendedScalarFunction& f,
                                                    std::span<const double> point,
                                                    double step = 1e-5);

struct GradCheckTolerance {
  double relative = 1e-6;
  double absolute = 1e-9;  // components smaller than this are compared absolutely
};

struct GradCheckReport {
  int case_id = 0;
  std::string objective;
  std::string descriptor;
  std::vector<double> analytic;
  std::vector<double> numeric;
  double max_rel_err = 0.0;  // over components of magnitude >= tolerance.absolute
  double max_abs_err = 0.0;
  bool within_tolerance = false;
  bool negative_control = false;  // expected to be rejected by the comparator
  // within_tolerance for ordinary cases; !within_tolerance for negative controls.
  bool pass = false;
};

GradCheckReport compare_gradients(std::span<const double> analytic, std::span<const double> numeric,
                                  const GradCheckTolerance& tolerance = {});

struct GradCheckOptions {
  std::uint64_t seed = 0;
  int cases = 100;  // per objective
  double step = 1e-5;
  GradCheckTolerance tolerance;
  bool corrupt_analytic = false;  // flips and offsets analytic gradients, for negative testing
};

// Token-level PSR/NSR/entropy/KL formulas plus the full surrogate of every
// algorithm (plain, clip-active and KL-active variants) and one negative control.
std::vector<GradCheckReport> run_gradcheck_suite(const GradCheckOptions& options);

bool all_passed(std::span<const GradCheckReport> reports);

inline constexpr const char* kGradcheckCsvSchema = "rlvr-gradcheck/1";

// "# schema=..." line, then case_id,objective,max_rel_err,max_abs_err,pass.
void write_gradcheck_csv(std::ostream& out, std::span<const GradCheckReport> reports);

}  // namespace rlvr
