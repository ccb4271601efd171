#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "rlvr/trainer.hpp"

namespace rlvr {

// Everything a run needs: training setup, the algorithms a suite compares,
// and where outputs go.
struct ExperimentConfig {
  TrainConfig train;
  std::vector<Algorithm> suite_algorithms{Algorithm::kPsr, Algorithm::kNsr, Algorithm::kGrpo,
                                          Algorithm::kPpoLite, Algorithm::kWReinforce};
  std::filesystem::path output_dir = "rlvr_out";
};

ExperimentConfig default_experiment_config();

// Sectioned key/value file:
//
//   [trainer]
//   steps = 200
//   learning_rate:real = 0.5     ; optional ":type" annotation, checked
//
// Types are int, real, bool, string and list (comma separated). Unknown
// sections or keys, type mismatches and unparsable values are rejected with a
// ValidationError. Keys not present keep their defaults.
ExperimentConfig parse_config(std::istream& in);
ExperimentConfig load_config(const std::filesystem::path& path);

// Writes every key with its type annotation; parse_config of the output
// reproduces the same config.
void write_resolved_config(std::ostream& out, const ExperimentConfig& config);

}  // namespace rlvr
