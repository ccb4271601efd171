#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "rlvr/evaluation.hpp"
#include "rlvr/trainer.hpp"

namespace rlvr {

// Train log: one JSON object per line, each carrying its schema tag.
void write_train_log(std::ostream& out, std::span<const StepRecord> log, bool include_wall_time);
std::vector<StepRecord> read_train_log(std::istream& in);

struct EvalRow {
  int step = 0;
  int k = 0;
  double exact = 0.0;
  double estimate = 0.0;
  double stderr_ = 0.0;
};

void write_eval_csv(std::ostream& out, std::span<const EvalReport> reports);
std::vector<EvalRow> read_eval_csv(std::istream& in);

inline constexpr const char* kComparisonSchema = "rlvr-comparison/1";

struct ComparisonRow {
  std::string algorithm;  // "base" for the initial policy
  int k = 0;
  double exact = 0.0;
};

void write_comparison_csv(std::ostream& out, std::span<const ComparisonRow> rows);
std::vector<ComparisonRow> read_comparison_csv(std::istream& in);

struct PlotSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

struct PlotSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log2_x = false;
  double y_min = 0.0;  // y axis spans [y_min, y_max]; y_max <= y_min means auto
  double y_max = 0.0;
};

// Standalone line chart; output depends only on the arguments.
std::string render_svg(const PlotSpec& spec, std::span<const PlotSeries> series);

// Output-directory layout shared by train, suite and report.
struct RunLayout {
  std::filesystem::path root;

  std::filesystem::path resolved_config() const { return root / "resolved-config.ini"; }
  std::filesystem::path log(std::string_view algorithm) const;
  std::filesystem::path eval_csv(std::string_view algorithm) const;
  std::filesystem::path eval_json(std::string_view algorithm) const;
  std::filesystem::path checkpoint_dir(std::string_view algorithm) const;
  std::filesystem::path comparison_csv() const { return root / "comparison.csv"; }
  std::filesystem::path plot(std::string_view name) const;
};

inline constexpr const char* kPlotNames[] = {"pass_at_k", "entropy", "correct_ratio",
                                             "fully_solved_ratio"};

struct ReportOptions {
  std::vector<int> k_filter;  // empty keeps every k
};

// Rebuilds comparison.csv and the four plots from logs/ and eval/ only.
// Algorithms are taken from logs/*.jsonl in name order. Throws ValidationError
// when no logs exist or an eval file is missing.
void generate_report(const std::filesystem::path& root, const ReportOptions& options = {});

}  // namespace rlvr
