#include "rlvr/checkpoint.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <vector>

#include <fmt/format.h>

namespace rlvr {

namespace {

std::string prefix_label(const Sequence& prefix) {
  if (prefix.empty()) return "-";
  return fmt::format("{}", fmt::join(prefix, "."));
}

void write_table(std::ostream& out, const char* name, const PolicyParams& layout,
                 std::span<const double> values) {
  const auto vocab = static_cast<std::size_t>(layout.vocab_size());
  out << name << ' ' << layout.num_rows() << '\n';
  for (std::size_t r = 0; r < layout.num_rows(); ++r) {
    const auto key = layout.key(r);
    out << key.prompt_id << ' ' << prefix_label(key.prefix);
    for (std::size_t v = 0; v < vocab; ++v) out << ' ' << fmt::format("{}", values[r * vocab + v]);
    out << '\n';
  }
}

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  std::vector<std::string> line(std::string_view expect_first = {}) {
    std::string text;
    if (!std::getline(in_, text)) fail("unexpected end of file");
    ++line_no_;
    std::istringstream ss(text);
    std::vector<std::string> fields;
    for (std::string f; ss >> f;) fields.push_back(f);
    if (fields.empty()) fail("empty line");
    if (!expect_first.empty() && fields[0] != expect_first) {
      fail(fmt::format("expected '{}' but found '{}'", expect_first, fields[0]));
    }
    return fields;
  }

  template <typename T>
  T number(const std::string& field) {
    T value{};
    const char* begin = field.data();
    const char* end = begin + field.size();
    if constexpr (std::is_floating_point_v<T>) {
      char* stop = nullptr;
      value = std::strtod(begin, &stop);
      if (stop != end) fail(fmt::format("bad real '{}'", field));
    } else {
      auto [ptr, ec] = std::from_chars(begin, end, value);
      if (ec != std::errc{} || ptr != end) fail(fmt::format("bad integer '{}'", field));
    }
    return value;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw CheckpointFormatError(
        fmt::format("checkpoint (format version {}) line {}: {}", kCheckpointVersion, line_no_, what));
  }

 private:
  std::istream& in_;
  int line_no_ = 0;
};

// `header` is the already-consumed "<name> <rows>" line.
void read_table(Reader& reader, const std::vector<std::string>& header, const char* name,
                const PolicyParams& layout, std::span<double> values) {
  if (header[0] != name) reader.fail(fmt::format("expected '{}' but found '{}'", name, header[0]));
  if (header.size() != 2 || reader.number<std::size_t>(header[1]) != layout.num_rows()) {
    reader.fail(fmt::format("{} row count does not match the task", name));
  }
  const auto vocab = static_cast<std::size_t>(layout.vocab_size());
  for (std::size_t r = 0; r < layout.num_rows(); ++r) {
    const auto fields = reader.line();
    if (fields.size() != vocab + 2) reader.fail("logit row has the wrong number of fields");
    const auto key = layout.key(r);
    if (reader.number<int>(fields[0]) != key.prompt_id || fields[1] != prefix_label(key.prefix)) {
      reader.fail(fmt::format("row {} key mismatch", r));
    }
    for (std::size_t v = 0; v < vocab; ++v) values[r * vocab + v] = reader.number<double>(fields[v + 2]);
  }
}

}  // namespace

void write_checkpoint(std::ostream& out, const Checkpoint& c) {
  const TaskSpec& task = c.params.task();
  out << "rlvr-checkpoint " << kCheckpointVersion << '\n';
  out << "task " << to_string(task.kind) << ' ' << task.vocab_size << ' ' << task.seq_len << ' '
      << task.modulus << '\n';
  out << "step " << c.step << '\n';
  out << "prompts " << c.prompts.size() << '\n';
  for (const PromptInstance& p : c.prompts) out << p.prompt_id << ' ' << p.target << '\n';
  out << "baselines";
  for (double b : c.baselines) out << ' ' << fmt::format("{}", b);
  out << '\n';
  out << "optimizer " << to_string(c.optimizer.kind) << ' ' << c.optimizer.step << '\n';
  write_table(out, "logits", c.params, c.params.values());
  if (c.optimizer.kind == OptimizerKind::kAdam && !c.optimizer.first_moment.empty()) {
    write_table(out, "first_moment", c.params, c.optimizer.first_moment);
    write_table(out, "second_moment", c.params, c.optimizer.second_moment);
  }
  out << "end\n";
}

Checkpoint read_checkpoint(std::istream& in) {
  Reader reader(in);
  auto magic = reader.line("rlvr-checkpoint");
  if (magic.size() != 2) reader.fail("malformed header");
  if (magic[1] != std::to_string(kCheckpointVersion)) {
    reader.fail(fmt::format("unsupported checkpoint version '{}'", magic[1]));
  }
  Checkpoint c;
  auto task_fields = reader.line("task");
  if (task_fields.size() != 5) reader.fail("malformed task line");
  TaskSpec task;
  try {
    task.kind = parse_task_kind(task_fields[1]);
  } catch (const ValidationError& e) {
    reader.fail(e.what());
  }
  task.vocab_size = reader.number<int>(task_fields[2]);
  task.seq_len = reader.number<int>(task_fields[3]);
  task.modulus = reader.number<int>(task_fields[4]);
  try {
    task.validate();
  } catch (const ValidationError& e) {
    reader.fail(e.what());
  }

  auto step = reader.line("step");
  if (step.size() != 2) reader.fail("malformed step line");
  c.step = reader.number<int>(step[1]);

  auto prompt_header = reader.line("prompts");
  if (prompt_header.size() != 2) reader.fail("malformed prompts line");
  const int count = reader.number<int>(prompt_header[1]);
  if (count < 1) reader.fail("prompt count must be positive");
  for (int i = 0; i < count; ++i) {
    auto fields = reader.line();
    if (fields.size() != 2 || reader.number<int>(fields[0]) != i) reader.fail("bad prompt line");
    c.prompts.push_back({i, task, reader.number<std::uint64_t>(fields[1])});
  }

  auto baselines = reader.line("baselines");
  if (baselines.size() != static_cast<std::size_t>(count) + 1) reader.fail("bad baselines line");
  for (std::size_t i = 1; i < baselines.size(); ++i) c.baselines.push_back(reader.number<double>(baselines[i]));

  auto opt = reader.line("optimizer");
  if (opt.size() != 3) reader.fail("malformed optimizer line");
  try {
    c.optimizer.kind = parse_optimizer(opt[1]);
  } catch (const ValidationError& e) {
    reader.fail(e.what());
  }
  c.optimizer.step = reader.number<std::int64_t>(opt[2]);

  c.params = PolicyParams(task, count);
  read_table(reader, reader.line(), "logits", c.params, c.params.values());
  auto next = reader.line();
  if (next[0] == "first_moment") {
    if (c.optimizer.kind != OptimizerKind::kAdam) reader.fail("moments in a non-adam checkpoint");
    c.optimizer.first_moment.assign(c.params.size(), 0.0);
    c.optimizer.second_moment.assign(c.params.size(), 0.0);
    read_table(reader, next, "first_moment", c.params, c.optimizer.first_moment);
    read_table(reader, reader.line(), "second_moment", c.params, c.optimizer.second_moment);
    next = reader.line();
  }
  if (next[0] != "end" || next.size() != 1) reader.fail("missing end marker");
  if (!c.params.all_finite()) reader.fail("non-finite logits");
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(fmt::format("cannot write checkpoint {}", path.string()));
  write_checkpoint(out, checkpoint);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointFormatError(fmt::format("cannot open checkpoint {}", path.string()));
  return read_checkpoint(in);
}

std::string checkpoint_filename(int step) { return fmt::format("step_{:06d}.ckpt", step); }

}  // namespace rlvr
