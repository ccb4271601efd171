#include <doctest.h>

#include <cmath>
#include <sstream>

#include "oracles.hpp"
#include "rlvr/errors.hpp"
#include "rlvr/evaluation.hpp"

using namespace rlvr;

namespace {

// 1 - C(n-c, k) / C(n, k) by counting k-subsets for tiny n.
double subset_oracle(int n, int c, int k) {
  int total = 0, hit = 0;
  for (unsigned mask = 0; mask < (1u << n); ++mask) {
    if (std::popcount(mask) != k) continue;
    ++total;
    hit += (mask & ((1u << c) - 1)) != 0;  // the first c samples are correct
  }
  return static_cast<double>(hit) / total;
}

PolicyParams random_params(const TaskSpec& task, int prompts, std::uint64_t seed, double scale) {
  PolicyParams params(task, prompts);
  Rng rng(seed);
  std::normal_distribution<double> g(0.0, scale);
  for (double& z : params.values()) z = g(rng);
  return params;
}

}  // namespace

TEST_CASE("pass_at_k_unbiased examples") {
  CHECK(pass_at_k_unbiased({4, 2, 2}) == doctest::Approx(5.0 / 6).epsilon(1e-15));
  CHECK(subset_oracle(4, 2, 2) == doctest::Approx(5.0 / 6));
  for (int k = 1; k <= 10; ++k) {
    CHECK(pass_at_k_unbiased({10, 10, k}) == 1.0);
    CHECK(pass_at_k_unbiased({10, 0, k}) == 0.0);
  }
  CHECK_THROWS_AS(pass_at_k_unbiased({4, 5, 1}), ValidationError);
  CHECK_THROWS_AS(pass_at_k_unbiased({4, 2, 5}), ValidationError);
  CHECK_THROWS_AS(pass_at_k_unbiased({4, 2, 0}), ValidationError);
}

TEST_CASE("pass_at_k_unbiased matches subset counting") {
  for (int n = 1; n <= 12; ++n) {
    for (int c = 0; c <= n; ++c) {
      for (int k = 1; k <= n; ++k) {
        CHECK(pass_at_k_unbiased({n, c, k}) == doctest::Approx(subset_oracle(n, c, k)).epsilon(1e-13));
      }
    }
  }
}

TEST_CASE("pass_at_k_unbiased bounds and monotonicity up to n = 4096") {
  for (int n : {64, 257, 1000, 4096}) {
    for (int c : {0, 1, 2, n / 3, n - 1, n}) {
      double prev = -1.0;
      for (int k = 1; k <= n; k += std::max(1, n / 97)) {
        const double v = pass_at_k_unbiased({n, c, k});
        CHECK(std::isfinite(v));
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
        CHECK(v >= prev);
        prev = v;
      }
    }
    for (int k : {1, 7, n}) {
      CHECK(pass_at_k_unbiased({n, n, k}) == 1.0);
      CHECK(pass_at_k_unbiased({n, 0, k}) == 0.0);
      double prev = -1.0;
      for (int c = 0; c <= n; c += std::max(1, n / 50)) {
        const double v = pass_at_k_unbiased({n, c, k});
        CHECK(v >= prev);
        prev = v;
      }
    }
  }
}

TEST_CASE("pass_at_k_exact examples") {
  CHECK(pass_at_k_from_mass(0.25, 2) == 0.4375);
  CHECK(pass_at_k_from_mass(0.37, 1) == 0.37);
  for (int k : {1, 2, 64}) CHECK(pass_at_k_from_mass(1.0, k) == 1.0);

  const TaskSpec task{TaskKind::kMultiSum, 5, 3, 5};
  const auto prompts = generate_prompts(task, 3, 2);
  const PolicyParams uniform(task, 3);
  for (const auto& p : prompts) {
    CHECK(pass_at_k_exact(uniform, p, 1, 0.6) == doctest::Approx(0.2).epsilon(1e-12));
  }
  const PolicyParams params = random_params(task, 3, 4, 1.0);
  for (const auto& p : prompts) {
    const double mass = oracle::correct_mass(params, p, 0.6);
    CHECK(pass_at_k_exact(params, p, 1, 0.6) == doctest::Approx(mass).epsilon(1e-12));
    double prev = 0.0;
    for (int k = 1; k <= 64; k *= 2) {
      const double v = pass_at_k_exact(params, p, k, 0.6);
      CHECK(v == doctest::Approx(1 - std::pow(1 - mass, k)).epsilon(1e-12));
      CHECK(v >= prev);
      prev = v;
    }
  }
}

TEST_CASE("exact pass@k is non-decreasing in correct mass") {
  for (int k : {1, 3, 16}) {
    double prev = -1.0;
    for (double m = 0.0; m <= 1.0; m += 0.05) {
      const double v = pass_at_k_from_mass(m, k);
      CHECK(v >= prev);
      prev = v;
    }
  }
}

TEST_CASE("estimator at k = n is the indicator of at least one success") {
  for (int c = 0; c <= 8; ++c) CHECK(pass_at_k_unbiased({8, c, 8}) == (c >= 1 ? 1.0 : 0.0));
}

TEST_CASE("estimate_pass_curve is deterministic and validates n") {
  const TaskSpec task{TaskKind::kUniqueAnswer, 4, 3, 2};
  const auto prompts = generate_prompts(task, 3, 0);
  const PolicyParams params = random_params(task, 3, 1, 1.0);
  const std::vector<int> ks{1, 2, 4};
  const auto a = estimate_pass_curve(params, prompts, 16, ks, 1.0, 5);
  const auto b = estimate_pass_curve(params, prompts, 16, ks, 1.0, 5);
  CHECK(a.estimate == b.estimate);
  CHECK(a.correct_counts == b.correct_counts);
  CHECK(a.seed == 5);
  CHECK(a.n == 16);
  CHECK_THROWS_AS(estimate_pass_curve(params, prompts, 2, ks, 1.0, 5), ValidationError);
}

TEST_CASE("estimator with n = 4096 is within 0.02 of exact") {
  const TaskSpec task{TaskKind::kMultiSum, 4, 3, 4};
  const auto prompts = generate_prompts(task, 2, 3);
  for (std::uint64_t s = 0; s < 3; ++s) {
    const PolicyParams params = random_params(task, 2, 10 + s, 1.5);
    const auto ks = doubling_k_list(64);
    const auto est = estimate_pass_curve(params, prompts, 4096, ks, 1.0, s);
    for (std::size_t i = 0; i < ks.size(); ++i) {
      double exact = 0.0;
      for (const auto& p : prompts) exact += pass_at_k_exact(params, p, ks[i], 1.0);
      exact /= static_cast<double>(prompts.size());
      CHECK(std::abs(est.estimate[i] - exact) <= 0.02);
    }
  }
}

TEST_CASE("evaluate fills a consistent report") {
  const TaskSpec task{TaskKind::kMultiSum, 5, 3, 5};
  const auto prompts = generate_prompts(task, 4, 1);
  const PolicyParams params = random_params(task, 4, 2, 1.0);
  EvalOptions options;
  options.samples = 32;
  options.k_list = {1, 2, 4, 8, 16, 32};
  const EvalReport r = evaluate(params, prompts, options, 7);
  CHECK(r.step == 7);
  CHECK(r.temperature == 0.6);
  REQUIRE(r.correct_mass.size() == 4);
  double prev = 0.0;
  for (std::size_t i = 0; i < r.k_list.size(); ++i) {
    double mean = 0.0;
    for (double m : r.correct_mass) mean += pass_at_k_from_mass(m, r.k_list[i]);
    mean /= 4;
    CHECK(r.exact[i] == doctest::Approx(mean).epsilon(1e-14));
    CHECK(r.exact[i] >= prev);
    CHECK(r.exact[i] <= 1.0);
    CHECK(r.estimated.estimate[i] >= 0.0);
    CHECK(r.estimated.estimate[i] <= 1.0);
    prev = r.exact[i];
  }
  for (std::size_t i = 1; i < r.k_list.size(); ++i) CHECK(r.estimated.estimate[i] >= r.estimated.estimate[i - 1]);
  CHECK(r.entropy.per_token == doctest::Approx(policy_entropy(params, prompts, 0.6)));
  const auto j = to_json(r);
  CHECK(j["schema"] == "rlvr-eval/1");
  CHECK(j["k"].size() == 6);
}

TEST_CASE("batch_stats examples") {
  auto group = [](std::vector<int> rewards) {
    RolloutGroup g;
    for (int r : rewards) {
      Trajectory t;
      t.reward = r;
      g.trajectories.push_back(t);
    }
    return g;
  };
  std::vector<RolloutGroup> mixed{group({1, 1}), group({1, -1})};
  const auto s = batch_stats(mixed, 3);
  CHECK(s.correct_ratio == 0.75);
  CHECK(s.fully_solved_ratio == 0.5);
  CHECK(s.step == 3);
  std::vector<RolloutGroup> good{group({1, 1}), group({1})};
  CHECK(batch_stats(good).correct_ratio == 1.0);
  CHECK(batch_stats(good).fully_solved_ratio == 1.0);
  std::vector<RolloutGroup> bad{group({-1, -1}), group({-1})};
  CHECK(batch_stats(bad).correct_ratio == 0.0);
  CHECK(batch_stats(bad).fully_solved_ratio == 0.0);

  // fully solved can exceed the correct ratio, but never the any-correct fraction
  std::vector<RolloutGroup> skew{group({1}), group({-1, -1, -1, -1, -1})};
  CHECK(batch_stats(skew).fully_solved_ratio > batch_stats(skew).correct_ratio);
  CHECK(batch_stats(skew).fully_solved_ratio <= 0.5);
}

TEST_CASE("eval CSV header") {
  std::ostringstream out;
  write_eval_csv_header(out);
  CHECK(out.str() == "# schema=rlvr-eval/1\nstep,k,exact,estimate,stderr\n");
  CHECK(doubling_k_list(64) == std::vector<int>{1, 2, 4, 8, 16, 32, 64});
  CHECK(doubling_k_list(20) == std::vector<int>{1, 2, 4, 8, 16});
}
