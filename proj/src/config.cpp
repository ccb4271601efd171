#include "rlvr/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

#include "rlvr/errors.hpp"

namespace rlvr {

namespace {

enum class ValueType { kInt, kReal, kBool, kString, kList };

std::string_view type_name(ValueType t) {
  switch (t) {
    case ValueType::kInt:
      return "int";
    case ValueType::kReal:
      return "real";
    case ValueType::kBool:
      return "bool";
    case ValueType::kString:
      return "string";
    case ValueType::kList:
      return "list";
  }
  return "?";
}

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

std::int64_t to_int(const std::string& text) {
  std::int64_t value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw ValidationError(fmt::format("'{}' is not an integer", text));
  }
  return value;
}

std::uint64_t to_uint(const std::string& text) {
  std::uint64_t value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw ValidationError(fmt::format("'{}' is not a non-negative integer", text));
  }
  return value;
}

int to_int32(const std::string& text) {
  const std::int64_t v = to_int(text);
  if (v < INT32_MIN || v > INT32_MAX) throw ValidationError(fmt::format("'{}' out of range", text));
  return static_cast<int>(v);
}

double to_real(const std::string& text) {
  char* end = nullptr;
  const double value = std::strtod(text.c_str(), &end);
  if (text.empty() || end != text.c_str() + text.size() || !std::isfinite(value)) {
    throw ValidationError(fmt::format("'{}' is not a finite real", text));
  }
  return value;
}

bool to_bool(const std::string& text) {
  if (text == "true") return true;
  if (text == "false") return false;
  throw ValidationError(fmt::format("'{}' is not a bool (true/false)", text));
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> items;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    item = trim(item);
    if (item.empty()) throw ValidationError(fmt::format("empty item in list '{}'", text));
    items.push_back(item);
  }
  return items;
}

std::string real_text(double x) { return fmt::format("{}", x); }

struct Field {
  std::string section;
  std::string key;
  ValueType type;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

const std::vector<Field>& schema() {
  using C = ExperimentConfig;
  using S = const std::string&;
  static const std::vector<Field> fields = {
      {"task", "kind", ValueType::kString,
       [](const C& c) { return std::string(to_string(c.train.task.kind)); },
       [](C& c, S v) { c.train.task.kind = parse_task_kind(v); }},
      {"task", "vocab_size", ValueType::kInt,
       [](const C& c) { return std::to_string(c.train.task.vocab_size); },
       [](C& c, S v) { c.train.task.vocab_size = to_int32(v); }},
      {"task", "seq_len", ValueType::kInt,
       [](const C& c) { return std::to_string(c.train.task.seq_len); },
       [](C& c, S v) { c.train.task.seq_len = to_int32(v); }},
      {"task", "modulus", ValueType::kInt,
       [](const C& c) { return std::to_string(c.train.task.modulus); },
       [](C& c, S v) { c.train.task.modulus = to_int32(v); }},
      {"task", "prompt_count", ValueType::kInt,
       [](const C& c) { return std::to_string(c.train.prompt_count); },
       [](C& c, S v) { c.train.prompt_count = to_int32(v); }},

      {"policy", "init", ValueType::kString,
       [](const C& c) { return std::string(to_string(c.train.init.scheme)); },
       [](C& c, S v) { c.train.init.scheme = parse_init_scheme(v); }},
      {"policy", "bias_strength", ValueType::kReal,
       [](const C& c) { return real_text(c.train.init.bias_strength); },
       [](C& c, S v) { c.train.init.bias_strength = to_real(v); }},
      {"policy", "noise_scale", ValueType::kReal,
       [](const C& c) { return real_text(c.train.init.noise_scale); },
       [](C& c, S v) { c.train.init.noise_scale = to_real(v); }},
      {"policy", "favored_sequences", ValueType::kInt,
       [](const C& c) { return std::to_string(c.train.init.favored_sequences); },
       [](C& c, S v) { c.train.init.favored_sequences = to_int32(v); }},

      {"objective", "algorithm", ValueType::kString,
       [](const C& c) { return std::string(to_string(c.train.objective.algorithm)); },
       [](C& c, S v) { c.train.objective.algorithm = parse_algorithm(v); }},
      {"objective", "lambda", ValueType::kReal,
       [](const C& c) { return real_text(c.train.objective.lambda); },
       [](C& c, S v) { c.train.objective.lambda = to_real(v); }},
      {"objective", "clip_epsilon", ValueType::kReal,
       [](const C& c) { return real_text(c.train.objective.clip_epsilon); },
       [](C& c, S v) { c.train.objective.clip_epsilon = to_real(v); }},
      {"objective", "kl_beta", ValueType::kReal,
       [](const C& c) { return real_text(c.train.objective.kl_beta); },
       [](C& c, S v) { c.train.objective.kl_beta = to_real(v); }},
      {"objective", "entropy_coef", ValueType::kReal,
       [](const C& c) { return real_text(c.train.objective.entropy_coef); },
       [](C& c, S v) { c.train.objective.entropy_coef = to_real(v); }},
      {"objective", "advantage_normalization", ValueType::kBool,
       [](const C& c) { return std::string(c.train.objective.advantage_normalization ? "true" : "false"); },
       [](C& c, S v) { c.train.objective.advantage_normalization = to_bool(v); }},

      {"trainer", "group_size", ValueType::kInt,
       [](const C& c) { return std::to_string(c.train.group_size); },
       [](C& c, S v) { c.train.group_size = to_int32(v); }},
      {"trainer", "prompts_per_step", ValueType::kInt,
       [](const C& c) { return std::to_string(c.train.prompts_per_step); },
       [](C& c, S v) { c.train.prompts_per_step = to_int32(v); }},
      {"trainer", "mini_batch_size", ValueType::kInt,
       [](const C& c) { return std::to_string(c.train.mini_batch_size); },
       [](C& c, S v) { c.train.mini_batch_size = to_int32(v); }},
      {"trainer", "epochs", ValueType::kInt,
       [](const C& c) { return std::to_string(c.train.epochs); },
       [](C& c, S v) { c.train.epochs = to_int32(v); }},
      {"trainer", "steps", ValueType::kInt,
       [](const C& c) { return std::to_string(c.train.steps); },
       [](C& c, S v) { c.train.steps = to_int32(v); }},
      {"trainer", "learning_rate", ValueType::kReal,
       [](const C& c) { return real_text(c.train.learning_rate); },
       [](C& c, S v) { c.train.learning_rate = to_real(v); }},
      {"trainer", "optimizer", ValueType::kString,
       [](const C& c) { return std::string(to_string(c.train.optimizer)); },
       [](C& c, S v) { c.train.optimizer = parse_optimizer(v); }},
      {"trainer", "temperature", ValueType::kReal,
       [](const C& c) { return real_text(c.train.train_temperature); },
       [](C& c, S v) { c.train.train_temperature = to_real(v); }},
      {"trainer", "checkpoint_every", ValueType::kInt,
       [](const C& c) { return std::to_string(c.train.checkpoint_every); },
       [](C& c, S v) { c.train.checkpoint_every = to_int32(v); }},
      {"trainer", "log_wall_time", ValueType::kBool,
       [](const C& c) { return std::string(c.train.log_wall_time ? "true" : "false"); },
       [](C& c, S v) { c.train.log_wall_time = to_bool(v); }},

      {"evaluation", "temperature", ValueType::kReal,
       [](const C& c) { return real_text(c.train.eval.temperature); },
       [](C& c, S v) { c.train.eval.temperature = to_real(v); }},
      {"evaluation", "samples", ValueType::kInt,
       [](const C& c) { return std::to_string(c.train.eval.samples); },
       [](C& c, S v) { c.train.eval.samples = to_int32(v); }},
      {"evaluation", "k_list", ValueType::kList,
       [](const C& c) { return fmt::format("{}", fmt::join(c.train.eval.k_list, ",")); },
       [](C& c, S v) {
         c.train.eval.k_list.clear();
         for (const std::string& item : split_list(v)) c.train.eval.k_list.push_back(to_int32(item));
       }},

      {"experiment", "seed", ValueType::kInt,
       [](const C& c) { return std::to_string(c.train.seed); },
       [](C& c, S v) { c.train.seed = to_uint(v); }},
      {"experiment", "output_dir", ValueType::kString,
       [](const C& c) { return c.output_dir.string(); },
       [](C& c, S v) { c.output_dir = v; }},
      {"experiment", "algorithms", ValueType::kList,
       [](const C& c) {
         std::vector<std::string_view> names;
         for (Algorithm a : c.suite_algorithms) names.push_back(to_string(a));
         return fmt::format("{}", fmt::join(names, ","));
       },
       [](C& c, S v) {
         c.suite_algorithms.clear();
         for (const std::string& item : split_list(v)) c.suite_algorithms.push_back(parse_algorithm(item));
       }},
  };
  return fields;
}

}  // namespace

ExperimentConfig default_experiment_config() {
  ExperimentConfig config;
  config.train.task = TaskSpec{TaskKind::kMultiSum, 5, 3, 5};
  config.train.init.scheme = InitScheme::kBiased;
  config.train.init.bias_strength = 2.0;
  return config;
}

ExperimentConfig parse_config(std::istream& in) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ValidationError(fmt::format("config parse error at line {}: {}", e.line(), e.message()));
  }

  std::map<std::pair<std::string, std::string>, const Field*> index;
  for (const Field& f : schema()) index[{f.section, f.key}] = &f;

  ExperimentConfig config = default_experiment_config();
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      throw ValidationError(fmt::format("config key '{}' must be inside a [section]", section));
    }
    for (const auto& [raw_key, value] : body) {
      std::string key = trim(raw_key);
      std::string annotated;
      if (const auto colon = key.find(':'); colon != std::string::npos) {
        annotated = trim(key.substr(colon + 1));
        key = trim(key.substr(0, colon));
      }
      const auto it = index.find({section, key});
      if (it == index.end()) {
        throw ValidationError(fmt::format("unknown config key [{}] {}", section, key));
      }
      const Field& field = *it->second;
      if (!annotated.empty() && annotated != type_name(field.type)) {
        throw ValidationError(fmt::format("[{}] {} has type {}, annotated as {}", section, key,
                                          type_name(field.type), annotated));
      }
      try {
        field.set(config, trim(value.data()));
      } catch (const ValidationError& e) {
        throw ValidationError(fmt::format("[{}] {}: {}", section, key, e.what()));
      }
    }
  }
  config.train.validate();
  if (config.suite_algorithms.empty()) throw ValidationError("[experiment] algorithms is empty");
  return config;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError(fmt::format("cannot open config file '{}'", path.string()));
  return parse_config(in);
}

void write_resolved_config(std::ostream& out, const ExperimentConfig& config) {
  out << "; rlvr-lab resolved config, schema rlvr-config/1\n";
  std::string section;
  for (const Field& f : schema()) {
    if (f.section != section) {
      if (!section.empty()) out << '\n';
      section = f.section;
      out << '[' << section << "]\n";
    }
    out << f.key << ':' << type_name(f.type) << " = " << f.get(config) << '\n';
  }
}

}  // namespace rlvr
