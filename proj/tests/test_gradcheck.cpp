#include <doctest.h>

#include <cmath>
#include <map>
#include <sstream>

#include <fmt/format.h>

#include "oracles.hpp"
#include "rlvr/errors.hpp"
#include "rlvr/gradcheck.hpp"
#include "rlvr/objectives.hpp"

using namespace rlvr;

namespace {

// Descent direction of L = -pi_s by central differences on logits ln(probs).
std::vector<double> fd_pi(const std::vector<double>& probs, int s) {
  std::vector<double> z;
  for (double p : probs) z.push_back(std::log(p));
  return finite_difference_grad(
      [s](std::span<const double> x) {
        return oracle::softmax(std::vector<double>(x.begin(), x.end()))[static_cast<std::size_t>(s)];
      },
      z);
}

std::vector<double> random_distribution(Rng& rng, int v) {
  std::normal_distribution<double> g(0.0, 1.5);
  std::vector<double> z(static_cast<std::size_t>(v));
  for (double& x : z) x = g(rng);
  return oracle::softmax(z);
}

void check_close(const std::vector<double>& a, const std::vector<double>& b, double tol) {
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) <= tol);
}

}  // namespace

TEST_CASE("analytic_psr_grad examples") {
  const double third = 1.0 / 3;
  check_close(analytic_psr_grad(std::vector<double>{third, third, third}, 0),
              {2.0 / 9, -1.0 / 9, -1.0 / 9}, 1e-15);
  for (double x : analytic_psr_grad(std::vector<double>{1.0, 0.0, 0.0}, 0)) CHECK(x == 0.0);
  const std::vector<double> p{0.5, 0.3, 0.2};
  check_close(analytic_psr_grad(p, 1), {-0.15, 0.21, -0.06}, 1e-15);
  check_close(fd_pi(p, 1), {-0.15, 0.21, -0.06}, 1e-9);
}

TEST_CASE("analytic_nsr_grad examples") {
  const double third = 1.0 / 3;
  check_close(analytic_nsr_grad(std::vector<double>{third, third, third}, 0),
              {-2.0 / 9, 1.0 / 9, 1.0 / 9}, 1e-15);
  const std::vector<double> p{0.5, 0.3, 0.2};
  check_close(analytic_nsr_grad(p, 1), {0.15, -0.21, 0.06}, 1e-15);

  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const auto probs = random_distribution(rng, 6);
    const int s = std::uniform_int_distribution<int>(0, 5)(rng);
    const auto g = analytic_nsr_grad(probs, s);
    const double ratio = g[s == 0 ? 1 : 0] / probs[s == 0 ? 1 : 0];
    for (std::size_t v = 0; v < probs.size(); ++v) {
      if (static_cast<int>(v) == s) continue;
      CHECK(g[v] > 0.0);
      CHECK(std::abs(g[v] / probs[v] - ratio) <= 1e-12);
    }
  }
}

TEST_CASE("analytic_entropy_grad examples") {
  for (double x : analytic_entropy_grad(std::vector<double>(5, 0.2))) CHECK(std::abs(x) <= 1e-15);
  const std::vector<double> p{0.5, 0.25, 0.25};
  const std::vector<double> expected{-0.173287, 0.086643, 0.086643};
  check_close(analytic_entropy_grad(p), expected, 1e-6);
  std::vector<double> z;
  for (double x : p) z.push_back(std::log(x));
  const auto fd = finite_difference_grad(
      [](std::span<const double> x) { return oracle::entropy(oracle::softmax({x.begin(), x.end()})); }, z);
  check_close(fd, analytic_entropy_grad(p), 1e-9);
}

TEST_CASE("entropy gradient pushes down the most likely token") {
  Rng rng(21);
  for (int trial = 0; trial < 1000; ++trial) {
    const int v = std::uniform_int_distribution<int>(2, 8)(rng);
    const auto probs = random_distribution(rng, v);
    const auto g = analytic_entropy_grad(probs);
    const auto top = std::max_element(probs.begin(), probs.end()) - probs.begin();
    const auto lowest = std::min_element(g.begin(), g.end()) - g.begin();
    CHECK(lowest == top);
  }
}

TEST_CASE("token gradients sum to zero and NSR = -PSR") {
  Rng rng(6);
  for (int trial = 0; trial < 500; ++trial) {
    const int v = std::uniform_int_distribution<int>(2, 9)(rng);
    const auto probs = random_distribution(rng, v);
    const int s = std::uniform_int_distribution<int>(0, v - 1)(rng);
    const auto psr = analytic_psr_grad(probs, s);
    const auto nsr = analytic_nsr_grad(probs, s);
    const auto ent = analytic_entropy_grad(probs);
    double sp = 0, sn = 0, se = 0;
    for (int i = 0; i < v; ++i) {
      sp += psr[i];
      sn += nsr[i];
      se += ent[i];
      CHECK(nsr[i] == -psr[i]);
    }
    CHECK(std::abs(sp) <= 1e-12);
    CHECK(std::abs(sn) <= 1e-12);
    CHECK(std::abs(se) <= 1e-12);
  }
}

TEST_CASE("analytic formulas reject invalid input") {
  CHECK_THROWS_AS(analytic_psr_grad(std::vector<double>{0.5, 0.4}, 0), ValidationError);
  CHECK_THROWS_AS(analytic_psr_grad(std::vector<double>{0.5, 0.5}, 2), ValidationError);
  CHECK_THROWS_AS(analytic_nsr_grad(std::vector<double>{1.5, -0.5}, 0), ValidationError);
  CHECK_THROWS_AS(analytic_entropy_grad(std::vector<double>{}), ValidationError);
}

TEST_CASE("finite differences on known functions") {
  const auto quad = finite_difference_grad(
      [](std::span<const double> z) { return z[0] * z[0] + z[1] * z[1]; }, std::vector<double>{1, 2});
  check_close(quad, {2, 4}, 1e-8);
  const auto lin = finite_difference_grad(
      [](std::span<const double> z) { return 3.0 * z[0] - 0.5 * z[1]; }, std::vector<double>{0.25, 0.5},
      0.125);
  CHECK(lin[0] == 3.0);
  CHECK(lin[1] == -0.5);
  CHECK_THROWS_AS(finite_difference_grad([](std::span<const double>) { return 0.0; },
                                         std::vector<double>{1}, 0.0),
                  ValidationError);
  CHECK_THROWS_AS(finite_difference_grad([](std::span<const double>) { return NAN; },
                                         std::vector<double>{1}),
                  NumericalError);
  const auto ext = finite_difference_grad_extended(
      [](std::span<const long double> z) { return z[0] * z[0] * z[0]; }, std::vector<double>{2});
  CHECK(ext[0] == doctest::Approx(12.0).epsilon(1e-9));
}

TEST_CASE("psr formula matches finite differences on 100 random cases") {
  Rng rng(30);
  for (int trial = 0; trial < 100; ++trial) {
    const auto probs = random_distribution(rng, std::uniform_int_distribution<int>(2, 8)(rng));
    const int s = std::uniform_int_distribution<int>(0, static_cast<int>(probs.size()) - 1)(rng);
    CHECK(compare_gradients(analytic_psr_grad(probs, s), fd_pi(probs, s)).pass);
  }
}

TEST_CASE("compare_gradients tolerance rules") {
  auto r = compare_gradients(std::vector<double>{1.0, 1e-12}, std::vector<double>{1.0 + 5e-7, 5e-10});
  CHECK(r.pass);
  CHECK(r.max_rel_err == doctest::Approx(5e-7).epsilon(1e-6));
  r = compare_gradients(std::vector<double>{1.0}, std::vector<double>{1.0 + 2e-6});
  CHECK_FALSE(r.pass);
  // 1e-8 is not near zero: compared relatively.
  r = compare_gradients(std::vector<double>{1e-8}, std::vector<double>{1.1e-8});
  CHECK_FALSE(r.pass);
  CHECK_THROWS_AS(compare_gradients(std::vector<double>{1.0}, std::vector<double>{}), ValidationError);
}

TEST_CASE("default gradcheck suite passes and is deterministic") {
  const auto reports = run_gradcheck_suite({});
  CHECK(all_passed(reports));
  std::map<std::string, int> counts;
  int controls = 0;
  for (const auto& r : reports) {
    ++counts[r.objective];
    controls += r.negative_control;
    if (!r.negative_control) {
      CHECK(r.max_rel_err <= 1e-6);
      CHECK(r.max_rel_err >= 0.0);
      CHECK(r.max_abs_err >= 0.0);
    } else {
      CHECK_FALSE(r.within_tolerance);
    }
  }
  CHECK(controls == 1);
  for (const char* name : {"psr_token", "nsr_token", "entropy_token", "kl_token"}) CHECK(counts[name] == 100);
  for (Algorithm a : kAllAlgorithms) {
    CHECK(counts[fmt::format("surrogate_{}", to_string(a))] == 100);
    CHECK(counts[fmt::format("surrogate_{}_clip", to_string(a))] == 100);
  }
  for (const auto& r : reports) {
    if (r.objective.ends_with("_clip")) CHECK(r.descriptor.find("clipped=0") == std::string::npos);
  }

  std::ostringstream a, b;
  write_gradcheck_csv(a, reports);
  write_gradcheck_csv(b, run_gradcheck_suite({}));
  CHECK(a.str() == b.str());
}

TEST_CASE("kl-active cases carry a positive beta") {
  GradCheckOptions options;
  options.cases = 10;
  for (const auto& r : run_gradcheck_suite(options)) {
    if (r.objective.starts_with("surrogate_grpo") || r.objective.starts_with("surrogate_ppo_lite")) {
      CHECK(r.descriptor.find("beta=0.000") == std::string::npos);
    }
  }
}

TEST_CASE("corrupted analytic gradients are reported as failures") {
  GradCheckOptions options;
  options.cases = 5;
  options.corrupt_analytic = true;
  const auto reports = run_gradcheck_suite(options);
  CHECK_FALSE(all_passed(reports));
  for (const auto& r : reports) {
    if (!r.negative_control) CHECK_FALSE(r.pass);
  }
}

TEST_CASE("gradcheck CSV schema") {
  GradCheckOptions options;
  options.cases = 2;
  std::ostringstream out;
  write_gradcheck_csv(out, run_gradcheck_suite(options));
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "# schema=rlvr-gradcheck/1");
  std::getline(in, line);
  CHECK(line == "case_id,objective,max_rel_err,max_abs_err,pass");
  int rows = 0;
  while (std::getline(in, line)) {
    CHECK(std::count(line.begin(), line.end(), ',') == 4);
    ++rows;
  }
  CHECK(rows == 2 * 16 + 1);
}
