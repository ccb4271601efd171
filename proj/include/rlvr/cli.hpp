#pragma once

#include <filesystem>
#include <iosfwd>

#include "rlvr/config.hpp"
#include "rlvr/gradcheck.hpp"
#include "rlvr/report.hpp"

namespace rlvr {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitValidation = 2,
  kExitNumerical = 3,
};

// The subcommands. Each writes into config.output_dir (or `out_dir`) and
// reports failures by throwing; run_cli maps exceptions to exit codes.
void cmd_train(const ExperimentConfig& config, std::ostream& out);
void cmd_eval(const std::filesystem::path& checkpoint, const ExperimentConfig& config,
              const std::filesystem::path& out_dir, std::ostream& out);
// Returns true iff every case passed. Writes the CSV to `csv` and, if
// `csv_path` is non-empty, to that file too.
bool cmd_gradcheck(const GradCheckOptions& options, const std::filesystem::path& csv_path,
                   std::ostream& csv);
void cmd_suite(const ExperimentConfig& config, std::ostream& out);
void cmd_report(const std::filesystem::path& root, const ReportOptions& options, std::ostream& out);

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace rlvr
