#include "rlvr/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>

#include <fmt/format.h>

#include "rlvr/errors.hpp"

namespace rlvr {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
  return cells;
}

int parse_int_cell(const std::string& cell, int line_no) {
  int value = 0;
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (ec != std::errc{} || ptr != cell.data() + cell.size()) {
    throw ValidationError(fmt::format("line {}: '{}' is not an integer", line_no, cell));
  }
  return value;
}

double parse_real_cell(const std::string& cell, int line_no) {
  char* end = nullptr;
  const double value = std::strtod(cell.c_str(), &end);
  if (cell.empty() || end != cell.c_str() + cell.size()) {
    throw ValidationError(fmt::format("line {}: '{}' is not a number", line_no, cell));
  }
  return value;
}

// Reads the "# schema=..." line and the column header, then hands each data
// row to `row` split into exactly `header`'s column count.
template <typename RowFn>
void read_csv(std::istream& in, std::string_view schema, std::string_view header, RowFn&& row) {
  std::string line;
  if (!std::getline(in, line) || line != fmt::format("# schema={}", schema)) {
    throw ValidationError(fmt::format("expected '# schema={}' on line 1", schema));
  }
  if (!std::getline(in, line) || line != header) {
    throw ValidationError(fmt::format("expected header '{}' on line 2", header));
  }
  const std::size_t columns = split_csv(std::string(header)).size();
  int line_no = 2;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cells = split_csv(line);
    if (cells.size() != columns) {
      throw ValidationError(fmt::format("line {}: expected {} columns", line_no, columns));
    }
    row(cells, line_no);
  }
}

std::string xml_escape(std::string_view text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&':
        out += "&amp;";
        break;
      case '<':
        out += "&lt;";
        break;
      case '>':
        out += "&gt;";
        break;
      case '"':
        out += "&quot;";
        break;
      default:
        out += c;
    }
  }
  return out;
}

double nice_step(double range) {
  const double raw = range / 5.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  const double f = raw / mag;
  if (f <= 1.0) return mag;
  if (f <= 2.0) return 2.0 * mag;
  if (f <= 5.0) return 5.0 * mag;
  return 10.0 * mag;
}

std::string tick_label(double v) {
  std::string s = fmt::format("{:.4g}", v);
  return s == "-0" ? "0" : s;
}

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                    "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

void write_text_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError(fmt::format("cannot write '{}'", path.string()));
  out << content;
}

}  // namespace

void write_train_log(std::ostream& out, std::span<const StepRecord> log, bool include_wall_time) {
  for (const StepRecord& r : log) out << to_json(r, include_wall_time).dump() << '\n';
}

std::vector<StepRecord> read_train_log(std::istream& in) {
  std::vector<StepRecord> log;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      log.push_back(step_record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(fmt::format("train log line {}: {}", line_no, e.what()));
    }
  }
  return log;
}

void write_eval_csv(std::ostream& out, std::span<const EvalReport> reports) {
  write_eval_csv_header(out);
  for (const EvalReport& r : reports) write_eval_csv_rows(out, r);
}

std::vector<EvalRow> read_eval_csv(std::istream& in) {
  std::vector<EvalRow> rows;
  read_csv(in, kEvalSchema, "step,k,exact,estimate,stderr",
           [&](const std::vector<std::string>& c, int n) {
             rows.push_back({parse_int_cell(c[0], n), parse_int_cell(c[1], n),
                             parse_real_cell(c[2], n), parse_real_cell(c[3], n),
                             parse_real_cell(c[4], n)});
           });
  return rows;
}

void write_comparison_csv(std::ostream& out, std::span<const ComparisonRow> rows) {
  out << "# schema=" << kComparisonSchema << '\n';
  out << "algorithm,k,exact\n";
  for (const ComparisonRow& r : rows) out << fmt::format("{},{},{:.17g}\n", r.algorithm, r.k, r.exact);
}

std::vector<ComparisonRow> read_comparison_csv(std::istream& in) {
  std::vector<ComparisonRow> rows;
  read_csv(in, kComparisonSchema, "algorithm,k,exact",
           [&](const std::vector<std::string>& c, int n) {
             rows.push_back({c[0], parse_int_cell(c[1], n), parse_real_cell(c[2], n)});
           });
  return rows;
}

std::string render_svg(const PlotSpec& spec, std::span<const PlotSeries> series) {
  constexpr double kWidth = 640, kHeight = 420;
  constexpr double kLeft = 70, kRight = 150, kTop = 40, kBottom = 55;
  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;

  auto tx = [&](double x) { return spec.log2_x ? std::log2(x) : x; };

  double x_lo = std::numeric_limits<double>::infinity(), x_hi = -x_lo;
  double y_lo = x_lo, y_hi = -x_lo;
  for (const PlotSeries& s : series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      x_lo = std::min(x_lo, tx(s.x[i]));
      x_hi = std::max(x_hi, tx(s.x[i]));
      y_lo = std::min(y_lo, s.y[i]);
      y_hi = std::max(y_hi, s.y[i]);
    }
  }
  if (!std::isfinite(x_lo)) x_lo = 0, x_hi = 1, y_lo = 0, y_hi = 1;
  if (x_hi == x_lo) x_lo -= 0.5, x_hi += 0.5;
  if (spec.y_max > spec.y_min) {
    y_lo = spec.y_min;
    y_hi = spec.y_max;
  } else {
    const double pad = y_hi > y_lo ? 0.05 * (y_hi - y_lo) : 0.5;
    y_lo -= pad;
    y_hi += pad;
  }

  auto px = [&](double x) { return kLeft + (tx(x) - x_lo) / (x_hi - x_lo) * plot_w; };
  auto py = [&](double y) { return kTop + (y_hi - y) / (y_hi - y_lo) * plot_h; };

  std::string svg = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" "
      "viewBox=\"0 0 {0} {1}\" font-family=\"sans-serif\" font-size=\"12\">\n"
      "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
      kWidth, kHeight);
  svg += fmt::format("<text x=\"{:.2f}\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n",
                     kLeft + plot_w / 2, xml_escape(spec.title));
  svg += fmt::format(
      "<rect x=\"{:.2f}\" y=\"{:.2f}\" width=\"{:.2f}\" height=\"{:.2f}\" fill=\"none\" "
      "stroke=\"black\"/>\n",
      kLeft, kTop, plot_w, plot_h);

  // x ticks
  std::vector<double> x_ticks;
  if (spec.log2_x) {
    for (double e = std::ceil(x_lo); e <= x_hi + 1e-9; e += 1.0) x_ticks.push_back(std::exp2(e));
  } else {
    const double step = nice_step(x_hi - x_lo);
    for (double v = std::ceil(x_lo / step) * step; v <= x_hi + 1e-9 * step; v += step) {
      x_ticks.push_back(v);
    }
  }
  for (double v : x_ticks) {
    const double x = px(v);
    svg += fmt::format(
        "<line x1=\"{0:.2f}\" y1=\"{1:.2f}\" x2=\"{0:.2f}\" y2=\"{2:.2f}\" stroke=\"#dddddd\"/>\n"
        "<text x=\"{0:.2f}\" y=\"{3:.2f}\" text-anchor=\"middle\">{4}</text>\n",
        x, kTop, kTop + plot_h, kTop + plot_h + 16, tick_label(v));
  }
  const double y_step = nice_step(y_hi - y_lo);
  for (double v = std::ceil(y_lo / y_step) * y_step; v <= y_hi + 1e-9 * y_step; v += y_step) {
    const double y = py(v);
    svg += fmt::format(
        "<line x1=\"{0:.2f}\" y1=\"{1:.2f}\" x2=\"{2:.2f}\" y2=\"{1:.2f}\" stroke=\"#dddddd\"/>\n"
        "<text x=\"{3:.2f}\" y=\"{4:.2f}\" text-anchor=\"end\">{5}</text>\n",
        kLeft, y, kLeft + plot_w, kLeft - 6, y + 4, tick_label(v));
  }
  svg += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" text-anchor=\"middle\">{}</text>\n",
                     kLeft + plot_w / 2, kHeight - 14, xml_escape(spec.x_label));
  svg += fmt::format(
      "<text x=\"18\" y=\"{0:.2f}\" text-anchor=\"middle\" transform=\"rotate(-90 18 {0:.2f})\">{1}"
      "</text>\n",
      kTop + plot_h / 2, xml_escape(spec.y_label));

  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = kPalette[s % std::size(kPalette)];
    std::string points;
    for (std::size_t i = 0; i < series[s].x.size(); ++i) {
      if (!points.empty()) points += ' ';
      points += fmt::format("{:.2f},{:.2f}", px(series[s].x[i]), py(series[s].y[i]));
    }
    svg += fmt::format(
        "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.8\" points=\"{}\"/>\n", color,
        points);
    const double ly = kTop + 10 + 18.0 * static_cast<double>(s);
    svg += fmt::format(
        "<line x1=\"{0:.2f}\" y1=\"{1:.2f}\" x2=\"{2:.2f}\" y2=\"{1:.2f}\" stroke=\"{3}\" "
        "stroke-width=\"3\"/>\n<text x=\"{4:.2f}\" y=\"{5:.2f}\">{6}</text>\n",
        kLeft + plot_w + 12, ly, kLeft + plot_w + 32, color, kLeft + plot_w + 38, ly + 4,
        xml_escape(series[s].label));
  }
  svg += "</svg>\n";
  return svg;
}

fs::path RunLayout::log(std::string_view algorithm) const {
  return root / "logs" / fmt::format("{}.jsonl", algorithm);
}
fs::path RunLayout::eval_csv(std::string_view algorithm) const {
  return root / "eval" / fmt::format("{}.csv", algorithm);
}
fs::path RunLayout::eval_json(std::string_view algorithm) const {
  return root / "eval" / fmt::format("{}.jsonl", algorithm);
}
fs::path RunLayout::checkpoint_dir(std::string_view algorithm) const {
  return root / "checkpoints" / std::string(algorithm);
}
fs::path RunLayout::plot(std::string_view name) const {
  return root / "plots" / fmt::format("{}.svg", name);
}

void generate_report(const fs::path& root, const ReportOptions& options) {
  const RunLayout layout{root};
  const fs::path log_dir = root / "logs";
  std::vector<std::string> algorithms;
  if (fs::is_directory(log_dir)) {
    for (const auto& entry : fs::directory_iterator(log_dir)) {
      if (entry.is_regular_file() && entry.path().extension() == ".jsonl") {
        algorithms.push_back(entry.path().stem().string());
      }
    }
  }
  if (algorithms.empty()) {
    throw ValidationError(fmt::format("no train logs found under '{}'", log_dir.string()));
  }
  std::sort(algorithms.begin(), algorithms.end());

  auto keep_k = [&](int k) {
    return options.k_filter.empty() ||
           std::find(options.k_filter.begin(), options.k_filter.end(), k) != options.k_filter.end();
  };
  auto open = [](const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError(fmt::format("cannot open '{}'", path.string()));
    return in;
  };

  std::map<std::string, std::vector<StepRecord>> logs;
  std::map<std::string, std::vector<EvalRow>> evals;
  for (const std::string& a : algorithms) {
    std::ifstream log_in = open(layout.log(a));
    logs[a] = read_train_log(log_in);
    std::ifstream eval_in = open(layout.eval_csv(a));
    evals[a] = read_eval_csv(eval_in);
    if (evals[a].empty()) throw ValidationError(fmt::format("eval file for '{}' is empty", a));
  }

  std::vector<ComparisonRow> table;
  std::vector<PlotSeries> curves;
  auto add_rows = [&](const std::string& label, const std::vector<EvalRow>& rows, int step) {
    PlotSeries curve{label, {}, {}};
    for (const EvalRow& r : rows) {
      if (r.step != step || !keep_k(r.k)) continue;
      table.push_back({label, r.k, r.exact});
      curve.x.push_back(r.k);
      curve.y.push_back(r.exact);
    }
    curves.push_back(std::move(curve));
  };
  {
    const auto& rows = evals[algorithms.front()];
    add_rows("base", rows, rows.front().step);
  }
  for (const std::string& a : algorithms) add_rows(a, evals[a], evals[a].back().step);

  fs::create_directories(root / "plots");
  {
    std::ostringstream csv;
    write_comparison_csv(csv, table);
    write_text_file(layout.comparison_csv(), csv.str());
  }
  // base last so each algorithm keeps its color across all plots
  std::rotate(curves.begin(), curves.begin() + 1, curves.end());
  write_text_file(layout.plot("pass_at_k"),
                  render_svg({"Exact Pass@k at the final step", "k", "Pass@k", true, 0.0, 1.0},
                             curves));

  struct Metric {
    const char* name;
    const char* title;
    const char* y_label;
    double StepRecord::*field;
    bool unit_range;
  };
  const Metric metrics[] = {
      {"entropy", "Per-token entropy", "entropy (nats)", &StepRecord::entropy, false},
      {"correct_ratio", "Correct ratio per batch", "correct ratio", &StepRecord::correct_ratio,
       true},
      {"fully_solved_ratio", "Fully solved ratio per batch", "fully solved ratio",
       &StepRecord::fully_solved_ratio, true},
  };
  for (const Metric& m : metrics) {
    std::vector<PlotSeries> lines;
    for (const std::string& a : algorithms) {
      PlotSeries line{a, {}, {}};
      for (const StepRecord& r : logs[a]) {
        line.x.push_back(r.step);
        line.y.push_back(r.*m.field);
      }
      lines.push_back(std::move(line));
    }
    PlotSpec spec{m.title, "step", m.y_label, false, 0.0, m.unit_range ? 1.0 : 0.0};
    write_text_file(layout.plot(m.name), render_svg(spec, lines));
  }
}

}  // namespace rlvr
