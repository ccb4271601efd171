#include "rlvr/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include <fmt/format.h>

#include "rlvr/errors.hpp"
#include "rlvr/objectives.hpp"
#include "rlvr/policy.hpp"
#include "rlvr/rng.hpp"

namespace rlvr {

namespace {

void check_distribution(std::span<const double> probs) {
  if (probs.empty()) throw ValidationError("empty distribution");
  double total = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw ValidationError("distribution has invalid entry");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw ValidationError(fmt::format("distribution sums to {}, not 1", total));
  }
}

}  // namespace

std::vector<double> analytic_psr_grad(std::span<const double> probs, int sampled) {
  check_distribution(probs);
  if (sampled < 0 || sampled >= static_cast<int>(probs.size())) {
    throw ValidationError(fmt::format("sampled token {} out of range", sampled));
  }
  const double ps = probs[static_cast<std::size_t>(sampled)];
  std::vector<double> grad(probs.size());
  for (std::size_t v = 0; v < probs.size(); ++v) {
    grad[v] = static_cast<int>(v) == sampled ? ps * (1.0 - ps) : -probs[v] * ps;
  }
  return grad;
}

std::vector<double> analytic_nsr_grad(std::span<const double> probs, int sampled) {
  std::vector<double> grad = analytic_psr_grad(probs, sampled);
  for (double& g : grad) g = -g;
  return grad;
}

std::vector<double> analytic_entropy_grad(std::span<const double> probs) {
  check_distribution(probs);
  double mean_log = 0.0;
  for (double p : probs) {
    if (p > 0.0) mean_log += p * std::log(p);
  }
  std::vector<double> grad(probs.size(), 0.0);
  for (std::size_t v = 0; v < probs.size(); ++v) {
    if (probs[v] > 0.0) grad[v] = -probs[v] * (std::log(probs[v]) - mean_log);
  }
  return grad;
}

std::vector<double> finite_difference_grad(const ScalarFunction& f, std::span<const double> point,
                                           double step) {
  if (!(step > 0.0)) throw ValidationError("finite-difference step must be positive");
  std::vector<double> z(point.begin(), point.end());
  std::vector<double> grad(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double original = z[i];
    z[i] = original + step;
    const double up = f(z);
    z[i] = original - step;
    const double down = f(z);
    z[i] = original;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericalError(fmt::format("non-finite loss at coordinate {}", i));
    }
    grad[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

std::vector<double> finite_difference_grad_extended(const ExtendedScalarFunction& f,
                                                    std::span<const double> point, double step) {
  if (!(step > 0.0)) throw ValidationError("finite-difference step must be positive");
  std::vector<long double> z(point.begin(), point.end());
  std::vector<double> grad(z.size());
  const long double h = step;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const long double original = z[i];
    z[i] = original + h;
    const long double up = f(z);
    z[i] = original - h;
    const long double down = f(z);
    z[i] = original;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericalError(fmt::format("non-finite loss at coordinate {}", i));
    }
    grad[i] = static_cast<double>((up - down) / (2.0L * h));
  }
  return grad;
}

GradCheckReport compare_gradients(std::span<const double> analytic, std::span<const double> numeric,
                                  const GradCheckTolerance& tolerance) {
  if (analytic.size() != numeric.size()) throw ValidationError("gradient sizes differ");
  GradCheckReport report;
  report.analytic.assign(analytic.begin(), analytic.end());
  report.numeric.assign(numeric.begin(), numeric.end());
  bool absolute_ok = true;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double abs_err = std::abs(analytic[i] - numeric[i]);
    report.max_abs_err = std::max(report.max_abs_err, abs_err);
    const double scale = std::max(std::abs(analytic[i]), std::abs(numeric[i]));
    if (scale < tolerance.absolute) {
      if (abs_err > tolerance.absolute) absolute_ok = false;
      continue;
    }
    report.max_rel_err = std::max(report.max_rel_err, abs_err / scale);
  }
  report.within_tolerance = absolute_ok && report.max_rel_err <= tolerance.relative;
  report.pass = report.within_tolerance;
  return report;
}

namespace {

std::vector<double> analytic_kl_grad(std::span<const double> p, std::span<const double> q) {
  const double kl = kl_divergence(p, q);
  std::vector<double> grad(p.size());
  for (std::size_t v = 0; v < p.size(); ++v) {
    grad[v] = p[v] * (std::log(p[v]) - std::log(q[v]) - kl);
  }
  return grad;
}

std::vector<double> softmax_of(std::span<const double> z) {
  std::vector<double> p(z.size());
  softmax(z, 1.0, p);
  return p;
}

// Oracle-side softmax, entropy and KL in long double, written independently of
// the library versions.
std::vector<long double> softmax_ext(std::span<const long double> z) {
  const long double top = *std::max_element(z.begin(), z.end());
  std::vector<long double> p(z.size());
  long double total = 0.0L;
  for (std::size_t v = 0; v < z.size(); ++v) total += p[v] = std::exp(z[v] - top);
  for (long double& x : p) x /= total;
  return p;
}

long double entropy_ext(std::span<const long double> p) {
  long double h = 0.0L;
  for (long double x : p) h -= x * std::log(x);
  return h;
}

long double kl_ext(std::span<const long double> p, std::span<const double> q) {
  long double kl = 0.0L;
  for (std::size_t v = 0; v < p.size(); ++v) {
    kl += p[v] * (std::log(p[v]) - std::log(static_cast<long double>(q[v])));
  }
  return kl;
}

class SuiteBuilder {
 public:
  explicit SuiteBuilder(const GradCheckOptions& options) : options_(options) {}

  void add(std::string objective, std::string descriptor, std::vector<double> analytic,
           const std::vector<double>& numeric, bool negative_control = false,
           bool loss_matches = true) {
    if (options_.corrupt_analytic) {
      // The offset keeps all-zero gradients from surviving the flip.
      for (double& g : analytic) g = 1e-3 - g;
    }
    GradCheckReport report = compare_gradients(analytic, numeric, options_.tolerance);
    if (!loss_matches) {
      report.within_tolerance = false;
      descriptor += " loss-mismatch";
    }
    report.case_id = static_cast<int>(reports_.size());
    report.objective = std::move(objective);
    report.descriptor = std::move(descriptor);
    report.negative_control = negative_control;
    report.pass = negative_control ? !report.within_tolerance : report.within_tolerance;
    reports_.push_back(std::move(report));
  }

  std::vector<GradCheckReport> take() { return std::move(reports_); }

 private:
  const GradCheckOptions& options_;
  std::vector<GradCheckReport> reports_;
};

std::vector<double> random_logits(Rng& rng, int vocab, double scale) {
  std::normal_distribution<double> gaussian(0.0, scale);
  std::vector<double> z(static_cast<std::size_t>(vocab));
  for (double& x : z) x = gaussian(rng);
  return z;
}

void token_level_cases(const GradCheckOptions& options, SuiteBuilder& suite) {
  for (int c = 0; c < options.cases; ++c) {
    Rng rng = substream(options.seed, {11, static_cast<std::uint64_t>(c)});
    const int vocab = std::uniform_int_distribution<int>(2, 8)(rng);
    const std::vector<double> z = random_logits(rng, vocab, 2.0);
    const int sampled = std::uniform_int_distribution<int>(0, vocab - 1)(rng);
    const std::vector<double> probs = softmax_of(z);
    const std::string desc = fmt::format("V={} sampled={}", vocab, sampled);
    const auto pi_s = [sampled](std::span<const long double> x) {
      return softmax_ext(x)[static_cast<std::size_t>(sampled)];
    };

    // -dL/dz for L_psr = -pi_s is d(pi_s)/dz; for L_nsr = +pi_s it is -d(pi_s)/dz.
    suite.add("psr_token", desc, analytic_psr_grad(probs, sampled),
              finite_difference_grad_extended(pi_s, z, options.step));
    suite.add("nsr_token", desc, analytic_nsr_grad(probs, sampled),
              finite_difference_grad_extended(
                  [&](std::span<const long double> x) { return -pi_s(x); }, z, options.step));
    suite.add("entropy_token", desc, analytic_entropy_grad(probs),
              finite_difference_grad_extended(
                  [](std::span<const long double> x) { return entropy_ext(softmax_ext(x)); }, z,
                  options.step));
    const std::vector<double> ref_z = random_logits(rng, vocab, 1.5);
    const std::vector<double> ref = softmax_of(ref_z);
    suite.add("kl_token", desc, analytic_kl_grad(probs, ref),
              finite_difference_grad_extended(
                  [&](std::span<const long double> x) { return kl_ext(softmax_ext(x), ref); }, z,
                  options.step));
  }
}

struct SurrogateCase {
  ObjectiveConfig config;
  PolicyParams params;
  PolicyParams old_params;
  PolicyParams ref_params;
  std::vector<ScoredGroup> batch;
  std::string descriptor;
  int clipped_tokens = 0;
};

// Smallest distance of any token ratio from a clip boundary; finite
// differences straddling a kink would be meaningless.
double clip_margin(const SurrogateCase& sc) {
  double margin = 1e300;
  std::vector<double> p(static_cast<std::size_t>(sc.params.vocab_size()));
  std::vector<double> q(p.size());
  for (const ScoredGroup& sg : sc.batch) {
    for (const Trajectory& traj : sg.group.trajectories) {
      for (std::size_t t = 0; t < traj.tokens.size(); ++t) {
        const std::size_t row =
            sc.params.row(traj.prompt_id, std::span<const Token>(traj.tokens).first(t));
        softmax(sc.params.logits(row), 1.0, p);
        softmax(sc.old_params.logits(row), 1.0, q);
        const auto y = static_cast<std::size_t>(traj.tokens[t]);
        const double rho = p[y] / q[y];
        margin = std::min({margin, std::abs(rho - (1.0 - sc.config.clip_epsilon)),
                           std::abs(rho - (1.0 + sc.config.clip_epsilon))});
      }
    }
  }
  return margin;
}

// Independent restatement of the batch loss: per visited token,
//   -pi_old min(rho A, clip(rho, 1-eps, 1+eps) A) - c_H H(pi) + beta KL(pi || pi_ref),
// summed over active trajectories and divided by (all trajectories) x T.
long double reference_loss(const SurrogateCase& sc, std::span<const long double> z) {
  const auto vocab = static_cast<std::size_t>(sc.params.vocab_size());
  const bool kl_in_loss = sc.config.algorithm == Algorithm::kGrpo;
  const long double eps = sc.config.clip_epsilon;
  std::size_t n = 0;
  for (const ScoredGroup& sg : sc.batch) n += sg.group.trajectories.size();
  long double loss = 0.0L;
  std::vector<double> old(vocab), ref(vocab);
  for (const ScoredGroup& sg : sc.batch) {
    for (std::size_t i = 0; i < sg.group.trajectories.size(); ++i) {
      if (!sg.advantages.active[i]) continue;
      const Trajectory& traj = sg.group.trajectories[i];
      long double sum = 0.0L;
      for (std::size_t t = 0; t < traj.tokens.size(); ++t) {
        const std::size_t row =
            sc.params.row(traj.prompt_id, std::span<const Token>(traj.tokens).first(t));
        const auto p = softmax_ext(z.subspan(row * vocab, vocab));
        softmax(sc.old_params.logits(row), 1.0, old);
        const auto y = static_cast<std::size_t>(traj.tokens[t]);
        const long double a = sg.advantages.per_token[i][t];
        const long double rho = p[y] / old[y];
        const long double clipped = std::min(std::max(rho, 1.0L - eps), 1.0L + eps);
        sum -= old[y] * std::min(rho * a, clipped * a);
        sum -= sc.config.entropy_coef * entropy_ext(p);
        if (kl_in_loss) {
          softmax(sc.ref_params.logits(row), 1.0, ref);
          sum += sc.config.effective_kl_beta() * kl_ext(p, ref);
        }
      }
      loss += sum / static_cast<long double>(traj.tokens.size());
    }
  }
  return loss / static_cast<long double>(n);
}

SurrogateCase make_surrogate_case(Algorithm algorithm, bool clip_active, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> coin(0, 1);

  TaskSpec task;
  task.kind = coin(rng) ? TaskKind::kMultiSum : TaskKind::kUniqueAnswer;
  task.vocab_size = std::uniform_int_distribution<int>(2, 4)(rng);
  task.seq_len = std::uniform_int_distribution<int>(1, 3)(rng);
  task.modulus = std::uniform_int_distribution<int>(2, task.vocab_size)(rng);
  const int num_prompts = std::uniform_int_distribution<int>(1, 3)(rng);
  const auto prompts = generate_prompts(task, num_prompts, rng());

  SurrogateCase sc{};
  sc.config.algorithm = algorithm;
  sc.config.lambda = unit(rng);
  sc.config.clip_epsilon = 0.1 + 0.2 * unit(rng);
  sc.config.kl_beta = 0.05 + 0.45 * unit(rng);
  sc.config.entropy_coef = 0.2 * unit(rng);
  sc.config.advantage_normalization = coin(rng) == 1;

  sc.params = PolicyParams(task, num_prompts);
  std::normal_distribution<double> gaussian(0.0, 1.0);
  for (double& z : sc.params.values()) z = gaussian(rng);
  sc.old_params = sc.params;
  const double drift = clip_active ? 0.8 : 0.03;
  for (double& z : sc.old_params.values()) z += drift * gaussian(rng);
  sc.ref_params = sc.params;
  for (double& z : sc.ref_params.values()) z += 0.7 * gaussian(rng);

  // Rollouts come from the old (behavior) policy.
  std::vector<double> baselines(static_cast<std::size_t>(num_prompts));
  for (double& b : baselines) b = 2.0 * unit(rng) - 1.0;
  const int group_size = std::uniform_int_distribution<int>(1, 5)(rng);
  for (const PromptInstance& prompt : prompts) {
    RolloutGroup group{prompt.prompt_id, {}};
    for (int g = 0; g < group_size; ++g) {
      Trajectory traj = sample_trajectory(sc.old_params, prompt, rng, 1.0);
      traj.reward = verify(prompt, traj.tokens);
      traj.rollout_index = g;
      group.trajectories.push_back(std::move(traj));
    }
    AdvantageContext context{baselines[static_cast<std::size_t>(prompt.prompt_id)],
                             &sc.ref_params};
    sc.batch.push_back(score_group(sc.config, std::move(group), context));
  }
  normalize_advantages(sc.config, sc.batch);
  sc.descriptor = fmt::format("{} V={} T={} prompts={} G={} eps={:.3f} beta={:.3f} ent={:.3f}",
                              to_string(task.kind), task.vocab_size, task.seq_len, num_prompts,
                              group_size, sc.config.clip_epsilon, sc.config.effective_kl_beta(),
                              sc.config.entropy_coef);
  return sc;
}

void surrogate_cases(const GradCheckOptions& options, SuiteBuilder& suite) {
  std::uint64_t family = 0;
  for (Algorithm algorithm : kAllAlgorithms) {
    for (bool clip_active : {false, true}) {
      ++family;
      const std::string objective =
          fmt::format("surrogate_{}{}", to_string(algorithm), clip_active ? "_clip" : "");
      for (int c = 0; c < options.cases; ++c) {
        Rng rng = substream(options.seed, {23, family, static_cast<std::uint64_t>(c)});
        SurrogateCase sc;
        for (int attempt = 0;; ++attempt) {
          sc = make_surrogate_case(algorithm, clip_active, rng);
          const ReferencePolicies refs{&sc.old_params, &sc.ref_params};
          sc.clipped_tokens = evaluate_objective(sc.config, sc.batch, sc.params, refs).clipped_tokens;
          const bool kink_free = clip_margin(sc) > 1e-3;
          if (kink_free && (!clip_active || sc.clipped_tokens > 0)) break;
          if (attempt > 1000) throw NumericalError("could not draw a usable gradcheck case");
        }
        const ReferencePolicies refs{&sc.old_params, &sc.ref_params};
        const GradientTable analytic = loss_gradient(sc.config, sc.batch, sc.params, refs);
        const auto loss_at = [&](std::span<const long double> z) { return reference_loss(sc, z); };
        const std::vector<double> numeric =
            finite_difference_grad_extended(loss_at, sc.params.values(), options.step);
        // The oracle must describe the same function the library optimizes.
        const std::vector<long double> z0(sc.params.values().begin(), sc.params.values().end());
        const double oracle_loss = static_cast<double>(reference_loss(sc, z0));
        const double library_loss = surrogate_loss(sc.config, sc.batch, sc.params, refs);
        const bool same_loss =
            std::abs(oracle_loss - library_loss) <= 1e-12 * std::max(1.0, std::abs(oracle_loss));
        suite.add(objective, fmt::format("{} clipped={}", sc.descriptor, sc.clipped_tokens),
                  std::vector<double>(analytic.values().begin(), analytic.values().end()),
                  numeric, false, same_loss);

        // One negative control per suite: the REINFORCE gradient with the sign
        // of its largest component flipped must be rejected.
        if (algorithm == Algorithm::kReinforce && !clip_active && c == 0) {
          std::vector<double> corrupted(analytic.values().begin(), analytic.values().end());
          auto largest = std::max_element(corrupted.begin(), corrupted.end(),
                                          [](double a, double b) { return std::abs(a) < std::abs(b); });
          *largest = -*largest;
          suite.add("negative_control", "sign-flipped reinforce gradient", std::move(corrupted),
                    numeric, true);
        }
      }
    }
  }
}

}  // namespace

std::vector<GradCheckReport> run_gradcheck_suite(const GradCheckOptions& options) {
  if (options.cases < 1) throw ValidationError("gradcheck needs at least one case");
  SuiteBuilder suite(options);
  token_level_cases(options, suite);
  surrogate_cases(options, suite);
  return suite.take();
}

bool all_passed(std::span<const GradCheckReport> reports) {
  return std::all_of(reports.begin(), reports.end(), [](const auto& r) { return r.pass; });
}

void write_gradcheck_csv(std::ostream& out, std::span<const GradCheckReport> reports) {
  out << "# schema=" << kGradcheckCsvSchema << '\n';
  out << "case_id,objective,max_rel_err,max_abs_err,pass\n";
  for (const GradCheckReport& r : reports) {
    out << fmt::format("{},{},{:.6e},{:.6e},{}\n", r.case_id, r.objective, r.max_rel_err,
                       r.max_abs_err, r.pass ? 1 : 0);
  }
}

}  // namespace rlvr
