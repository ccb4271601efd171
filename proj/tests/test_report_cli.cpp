#include <doctest.h>

#include <sstream>

#include <nlohmann/json.hpp>

#include "rlvr/checkpoint.hpp"
#include "rlvr/cli.hpp"
#include "rlvr/report.hpp"
#include "scratch_dir.hpp"

using namespace rlvr;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

CliRun run(std::vector<std::string> args) {
  args.insert(args.begin(), "rlvr_lab");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

// Small, fast experiment written as a config file.
fs::path small_config(const fs::path& dir, const std::string& extra = "") {
  const fs::path p = dir / "small.ini";
  std::ofstream(p) << R"([task]
kind = multi_sum
vocab_size = 4
seq_len = 2
modulus = 3
prompt_count = 4
[trainer]
group_size = 4
prompts_per_step = 4
mini_batch_size = 8
steps = 4
learning_rate = 5
checkpoint_every = 2
[evaluation]
samples = 8
k_list = 1,2,4,8
[experiment]
algorithms = psr,nsr,grpo
)" << extra;
  return p;
}

}  // namespace

TEST_CASE("train log round trips") {
  std::vector<StepRecord> log(3);
  for (int i = 0; i < 3; ++i) {
    log[static_cast<std::size_t>(i)].step = i;
    log[static_cast<std::size_t>(i)].loss = 0.1 * i;
    log[static_cast<std::size_t>(i)].wall_time_s = 9.0;
  }
  std::stringstream s;
  write_train_log(s, log, false);
  CHECK(s.str().find("wall_time") == std::string::npos);
  const auto back = read_train_log(s);
  REQUIRE(back.size() == 3);
  CHECK(back[2].loss == 0.2);
  CHECK(back[2].wall_time_s == 0.0);
  std::istringstream bad("{\"schema\": \"nope\"}\n");
  CHECK_THROWS_AS(read_train_log(bad), ValidationError);
  std::istringstream junk("not json\n");
  CHECK_THROWS_AS(read_train_log(junk), ValidationError);
}

TEST_CASE("comparison CSV round trips and validates its schema") {
  const std::vector<ComparisonRow> rows{{"base", 1, 0.25}, {"psr", 1, 0.5}, {"psr", 16, 1.0 / 3}};
  std::stringstream s;
  write_comparison_csv(s, rows);
  CHECK(s.str().rfind("# schema=rlvr-comparison/1\nalgorithm,k,", 0) == 0);
  const auto back = read_comparison_csv(s);
  REQUIRE(back.size() == 3);
  CHECK(back[2].algorithm == "psr");
  CHECK(back[2].k == 16);
  CHECK(back[2].exact == doctest::Approx(1.0 / 3).epsilon(1e-12));
  std::istringstream other("# schema=other/1\nalgorithm,k,exact\n");
  CHECK_THROWS_AS(read_comparison_csv(other), ValidationError);
}

TEST_CASE("svg output is deterministic and well formed") {
  const std::vector<PlotSeries> series{{"psr", {1, 2, 4}, {0.1, 0.5, 0.9}},
                                       {"nsr", {1, 2, 4}, {0.2, 0.4, 0.95}}};
  const PlotSpec spec{"pass@k", "k", "pass@k", true, 0.0, 1.0};
  const std::string svg = render_svg(spec, series);
  CHECK(svg == render_svg(spec, series));
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("</svg>") != std::string::npos);
  CHECK(svg.find(">psr<") != std::string::npos);
  CHECK(svg.find(">nsr<") != std::string::npos);
}

TEST_CASE("cli usage errors") {
  CHECK(run({}).code == kExitUsage);
  CHECK(run({"frobnicate"}).code == kExitUsage);
  CHECK(run({"train", "--bogus"}).code == kExitUsage);
  CHECK(run({"--help"}).code == kExitOk);
  CHECK(run({"--config", "/nonexistent.ini", "train"}).code == kExitValidation);
  const CliRun defaults = run({"--print-defaults"});
  CHECK(defaults.code == kExitOk);
  CHECK(defaults.out.find("[trainer]") != std::string::npos);
}

TEST_CASE("cli dry run resolves overrides without writing") {
  ScratchDir dir("dry");
  const fs::path out = dir.path() / "run";
  const CliRun r = run({"--config", small_config(dir.path()).string(), "--seed", "9", "--out",
                        out.string(), "--dry-run", "suite"});
  CHECK(r.code == kExitOk);
  CHECK(r.out.find("seed:int = 9") != std::string::npos);
  CHECK_FALSE(fs::exists(out));
}

TEST_CASE("cli train writes its outputs and eval reads them back") {
  ScratchDir dir("train");
  const fs::path out = dir.path() / "run";
  const fs::path cfg = small_config(dir.path(), "[objective]\nalgorithm = nsr\n");
  REQUIRE(run({"--config", cfg.string(), "--out", out.string(), "train"}).code == kExitOk);
  const RunLayout layout{out};
  CHECK(fs::exists(layout.resolved_config()));
  CHECK(fs::exists(layout.eval_json("nsr")));
  std::ifstream log_in(layout.log("nsr"));
  CHECK(read_train_log(log_in).size() == 5);
  std::ifstream eval_in(layout.eval_csv("nsr"));
  CHECK(read_eval_csv(eval_in).size() == 3 * 4);
  for (int step : {0, 2, 4}) {
    const fs::path ckpt = layout.checkpoint_dir("nsr") / checkpoint_filename(step);
    REQUIRE(fs::exists(ckpt));
    std::ostringstream again;
    write_checkpoint(again, load_checkpoint(ckpt));
    CHECK(again.str() == slurp(ckpt));
  }

  const fs::path eval_dir = dir.path() / "eval";
  const CliRun e = run({"--config", cfg.string(), "--out", eval_dir.string(), "eval",
                        (layout.checkpoint_dir("nsr") / checkpoint_filename(4)).string()});
  CHECK(e.code == kExitOk);
  CHECK(e.out.find("pass@8 exact") != std::string::npos);
  const auto j = nlohmann::json::parse(slurp(eval_dir / "eval.json"));
  CHECK(j["step"] == 4);

  std::ofstream(dir.path() / "bad.ckpt") << "rlvr-checkpoint 1\ntask multi_sum 4 2\n";
  const CliRun bad = run({"--config", cfg.string(), "--out", eval_dir.string(), "eval",
                          (dir.path() / "bad.ckpt").string()});
  CHECK(bad.code == kExitValidation);
  CHECK(bad.err.find("line 2") != std::string::npos);
}

TEST_CASE("eval of a uniform MULTI_SUM p=5 checkpoint gives pass@1 of 0.2 per prompt") {
  ScratchDir dir("uniform");
  const fs::path cfg0 = small_config(dir.path(), "[policy]\ninit = uniform\n");
  std::string text = slurp(cfg0);
  text.replace(text.find("steps = 4"), 9, "steps = 0");
  text.replace(text.find("vocab_size = 4\nseq_len = 2\nmodulus = 3"), 38,
               "vocab_size = 5\nseq_len = 3\nmodulus = 5");
  std::ofstream(cfg0, std::ios::trunc) << text;
  const fs::path out = dir.path() / "run";
  REQUIRE(run({"--config", cfg0.string(), "--out", out.string(), "train"}).code == kExitOk);
  const fs::path ckpt = RunLayout{out}.checkpoint_dir("reinforce") / checkpoint_filename(0);
  const CliRun e = run({"--config", cfg0.string(), "--out", (dir.path() / "e").string(), "eval",
                        ckpt.string()});
  REQUIRE(e.code == kExitOk);
  const auto j = nlohmann::json::parse(slurp(dir.path() / "e" / "eval.json"));
  CHECK(j["k"][0] == 1);
  CHECK(j["pass_at_k_exact"][0].get<double>() == doctest::Approx(0.2).epsilon(1e-12));
  for (const auto& mass : j["correct_mass"]) CHECK(mass.get<double>() == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("cli numerical abort exits with 3 and keeps a diagnostic checkpoint") {
  ScratchDir dir("abort");
  const fs::path cfg =
      small_config(dir.path(), "[objective]\nalgorithm = grpo\n");
  std::string text = slurp(cfg);
  text.replace(text.find("learning_rate = 5"), 17, "learning_rate = 1e308\noptimizer = adam");
  std::ofstream(cfg, std::ios::trunc) << text;
  const fs::path out = dir.path() / "run";
  const CliRun r = run({"--config", cfg.string(), "--out", out.string(), "train"});
  CHECK(r.code == kExitNumerical);
  bool found = false;
  for (const auto& entry : fs::directory_iterator(RunLayout{out}.checkpoint_dir("grpo"))) {
    if (entry.path().filename().string().starts_with("abort_")) found = true;
  }
  CHECK(found);
}

TEST_CASE("suite output is reproducible and report is idempotent") {
  ScratchDir dir("suite");
  const fs::path cfg = small_config(dir.path());
  const fs::path a = dir.path() / "a";
  const fs::path b = dir.path() / "b";
  REQUIRE(run({"--config", cfg.string(), "--out", a.string(), "suite"}).code == kExitOk);
  REQUIRE(run({"--config", cfg.string(), "--out", b.string(), "suite"}).code == kExitOk);
  const RunLayout la{a}, lb{b};
  for (const char* alg : {"psr", "nsr", "grpo"}) {
    CHECK(slurp(la.log(alg)) == slurp(lb.log(alg)));
    CHECK(slurp(la.eval_csv(alg)) == slurp(lb.eval_csv(alg)));
  }
  CHECK(slurp(la.comparison_csv()) == slurp(lb.comparison_csv()));
  for (const char* plot : kPlotNames) CHECK(slurp(la.plot(plot)) == slurp(lb.plot(plot)));

  const std::string comparison = slurp(la.comparison_csv());
  const std::string svg = slurp(la.plot("pass_at_k"));
  REQUIRE(run({"report", a.string()}).code == kExitOk);
  CHECK(slurp(la.comparison_csv()) == comparison);
  CHECK(slurp(la.plot("pass_at_k")) == svg);

  std::ifstream in(la.comparison_csv());
  const auto rows = read_comparison_csv(in);
  CHECK(rows.size() == 4 * 4);
  CHECK(rows.front().algorithm == "base");

  REQUIRE(run({"report", a.string(), "--k-list", "1,8"}).code == kExitOk);
  std::ifstream filtered_in(la.comparison_csv());
  for (const auto& row : read_comparison_csv(filtered_in)) CHECK((row.k == 1 || row.k == 8));

  CHECK(run({"report", (dir.path() / "empty").string()}).code == kExitValidation);
  CHECK(run({"report", a.string(), "--k-list", "1,zero"}).code == kExitValidation);
}

TEST_CASE("cli gradcheck") {
  ScratchDir dir("grad");
  const CliRun ok = run({"--out", dir.path().string(), "gradcheck", "--cases", "3"});
  CHECK(ok.code == kExitOk);
  CHECK(fs::exists(dir.path() / "gradcheck.csv"));
  CHECK(run({"gradcheck", "--cases", "3", "--inject-fault"}).code == kExitValidation);
  CHECK(run({"gradcheck", "--cases", "0"}).code == kExitUsage);
}
