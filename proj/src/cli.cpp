#include "rlvr/cli.hpp"

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "rlvr/checkpoint.hpp"
#include "rlvr/errors.hpp"

namespace rlvr {

namespace fs = std::filesystem;

namespace {

void write_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError(fmt::format("cannot write '{}'", path.string()));
  out << content;
}

std::string resolved_text(const ExperimentConfig& config) {
  std::ostringstream s;
  write_resolved_config(s, config);
  return s.str();
}

// Log, eval CSV/JSONL and checkpoints of one training run.
void write_run(const RunLayout& layout, std::string_view algorithm, const TrainResult& result,
               bool include_wall_time) {
  std::ostringstream log;
  write_train_log(log, result.log, include_wall_time);
  write_file(layout.log(algorithm), log.str());

  std::ostringstream csv;
  write_eval_csv(csv, result.evaluations);
  write_file(layout.eval_csv(algorithm), csv.str());

  std::string jsonl;
  for (const EvalReport& r : result.evaluations) jsonl += to_json(r).dump() + '\n';
  write_file(layout.eval_json(algorithm), jsonl);

  for (const Checkpoint& c : result.checkpoints) {
    std::ostringstream text;
    write_checkpoint(text, c);
    write_file(layout.checkpoint_dir(algorithm) / checkpoint_filename(c.step), text.str());
  }
}

void print_final(std::ostream& out, std::string_view algorithm, const TrainResult& result) {
  const StepRecord& last = result.log.back();
  out << fmt::format("{}: step {} entropy {:.4f} correct_ratio {:.4f} fully_solved {:.4f}",
                     algorithm, last.step, last.entropy, last.correct_ratio,
                     last.fully_solved_ratio);
  if (!result.evaluations.empty()) {
    const EvalReport& e = result.evaluations.back();
    out << fmt::format(" pass@{} {:.4f}", e.k_list.front(), e.exact.front());
    out << fmt::format(" pass@{} {:.4f}", e.k_list.back(), e.exact.back());
  }
  out << '\n';
}

std::vector<int> parse_k_list(const std::string& text) {
  std::vector<int> ks;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    try {
      std::size_t used = 0;
      const int k = std::stoi(item, &used);
      if (used != item.size() || k < 1) throw std::invalid_argument(item);
      ks.push_back(k);
    } catch (const std::logic_error&) {
      throw ValidationError(fmt::format("bad --k-list entry '{}'", item));
    }
  }
  return ks;
}

}  // namespace

void cmd_train(const ExperimentConfig& config, std::ostream& out) {
  const RunLayout layout{config.output_dir};
  const std::string_view algorithm = to_string(config.train.objective.algorithm);
  write_file(layout.resolved_config(), resolved_text(config));
  try {
    const TrainResult result = train(config.train);
    write_run(layout, algorithm, result, config.train.log_wall_time);
    print_final(out, algorithm, result);
  } catch (const TrainingAborted& e) {
    std::ostringstream log;
    write_train_log(log, e.log(), config.train.log_wall_time);
    write_file(layout.log(algorithm), log.str());
    std::ostringstream text;
    write_checkpoint(text, e.diagnostic());
    write_file(layout.checkpoint_dir(algorithm) /
                   fmt::format("abort_{}", checkpoint_filename(e.diagnostic().step)),
               text.str());
    throw;
  }
}

void cmd_eval(const fs::path& checkpoint, const ExperimentConfig& config, const fs::path& out_dir,
              std::ostream& out) {
  const Checkpoint c = load_checkpoint(checkpoint);
  EvalOptions options = config.train.eval;
  options.seed = config.train.seed;
  const EvalReport report = evaluate(c.params, c.prompts, options, c.step);
  write_file(out_dir / "eval.json", to_json(report).dump(2) + '\n');
  std::ostringstream csv;
  write_eval_csv(csv, std::span<const EvalReport>(&report, 1));
  write_file(out_dir / "eval.csv", csv.str());
  for (std::size_t i = 0; i < report.k_list.size(); ++i) {
    out << fmt::format("pass@{} exact {:.6f} estimate {:.6f} +- {:.6f}\n", report.k_list[i],
                       report.exact[i], report.estimated.estimate[i],
                       report.estimated.estimate_stderr[i]);
  }
  out << fmt::format("entropy per-token {:.6f} per-sequence {:.6f}\n", report.entropy.per_token,
                     report.entropy.per_sequence);
}

bool cmd_gradcheck(const GradCheckOptions& options, const fs::path& csv_path, std::ostream& csv) {
  const std::vector<GradCheckReport> reports = run_gradcheck_suite(options);
  std::ostringstream text;
  write_gradcheck_csv(text, reports);
  csv << text.str();
  if (!csv_path.empty()) write_file(csv_path, text.str());
  return all_passed(reports);
}

void cmd_suite(const ExperimentConfig& config, std::ostream& out) {
  const RunLayout layout{config.output_dir};
  write_file(layout.resolved_config(), resolved_text(config));
  const SuiteResult suite = run_experiment_suite(config.train, config.suite_algorithms);
  for (std::size_t a = 0; a < suite.algorithms.size(); ++a) {
    write_run(layout, to_string(suite.algorithms[a]), suite.runs[a], config.train.log_wall_time);
    print_final(out, to_string(suite.algorithms[a]), suite.runs[a]);
  }
  generate_report(config.output_dir);
}

void cmd_report(const fs::path& root, const ReportOptions& options, std::ostream& out) {
  generate_report(root, options);
  out << fmt::format("report written to {}\n", root.string());
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Tabular RLVR laboratory: PSR/NSR decomposition experiments", "rlvr_lab"};
  app.fallthrough();

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  bool print_defaults = false;
  bool dry_run = false;
  app.add_option("--config", config_path, "Experiment config file");
  app.add_option("--seed", seed, "Override the global seed");
  app.add_option("--out", out_dir, "Override the output directory");
  app.add_flag("--print-defaults", print_defaults, "Print the default config and exit");
  app.add_flag("--dry-run", dry_run, "Validate and print the resolved config without running");

  CLI::App* train_cmd = app.add_subcommand("train", "Train one algorithm");
  CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
  std::string checkpoint_path;
  eval_cmd->add_option("checkpoint", checkpoint_path, "Checkpoint file")->required();
  CLI::App* grad_cmd = app.add_subcommand("gradcheck", "Check analytic gradients");
  int cases = 100;
  bool inject_fault = false;
  grad_cmd->add_option("--cases", cases, "Random cases per objective")->check(CLI::PositiveNumber);
  grad_cmd->add_flag("--inject-fault", inject_fault, "Corrupt the analytic gradients");
  CLI::App* suite_cmd = app.add_subcommand("suite", "Train every configured algorithm");
  CLI::App* report_cmd = app.add_subcommand("report", "Rebuild tables and plots from logs");
  std::string report_dir;
  std::string k_list;
  report_cmd->add_option("dir", report_dir, "Output directory of a train or suite run");
  report_cmd->add_option("--k-list", k_list, "Comma separated k values to keep");
  app.require_subcommand(0, 1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (print_defaults) {
      write_resolved_config(out, default_experiment_config());
      return kExitOk;
    }
    if (app.get_subcommands().empty()) {
      err << app.help();
      return kExitUsage;
    }

    ExperimentConfig config =
        config_path.empty() ? default_experiment_config() : load_config(config_path);
    if (seed) config.train.seed = *seed;
    if (!out_dir.empty()) config.output_dir = out_dir;
    if (dry_run) {
      write_resolved_config(out, config);
      return kExitOk;
    }

    if (train_cmd->parsed()) {
      cmd_train(config, out);
    } else if (eval_cmd->parsed()) {
      cmd_eval(checkpoint_path, config, config.output_dir, out);
    } else if (grad_cmd->parsed()) {
      GradCheckOptions options;
      options.seed = seed.value_or(0);
      options.cases = cases;
      options.corrupt_analytic = inject_fault;
      const fs::path csv_path = out_dir.empty() ? fs::path{} : fs::path(out_dir) / "gradcheck.csv";
      if (!cmd_gradcheck(options, csv_path, out)) {
        err << "gradcheck: some cases failed\n";
        return kExitValidation;
      }
    } else if (suite_cmd->parsed()) {
      cmd_suite(config, out);
    } else if (report_cmd->parsed()) {
      ReportOptions options;
      if (!k_list.empty()) options.k_filter = parse_k_list(k_list);
      cmd_report(report_dir.empty() ? config.output_dir : fs::path(report_dir), options, out);
    }
    return kExitOk;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const TrainingAborted& e) {
    err << "numerical abort: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const NumericalError& e) {
    err << "numerical abort: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  }
}

}  // namespace rlvr
