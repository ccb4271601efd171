#include "rlvr/tasks.hpp"

#include <random>

#include <fmt/format.h>

#include "rlvr/errors.hpp"

namespace rlvr {

std::string_view to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::kMultiSum:
      return "multi_sum";
    case TaskKind::kUniqueAnswer:
      return "unique_answer";
  }
  return "unknown";
}

TaskKind parse_task_kind(std::string_view name) {
  if (name == "multi_sum") return TaskKind::kMultiSum;
  if (name == "unique_answer") return TaskKind::kUniqueAnswer;
  throw ValidationError(fmt::format("unknown task kind '{}'", name));
}

std::uint64_t TaskSpec::sequence_count() const {
  std::uint64_t count = 1;
  for (int t = 0; t < seq_len; ++t) {
    count *= static_cast<std::uint64_t>(vocab_size);
    if (count > kMaxEnumeration) {
      throw EnumerationBoundError(fmt::format(
          "vocab_size^seq_len = {}^{} exceeds the enumeration bound {}",
          vocab_size, seq_len, kMaxEnumeration));
    }
  }
  return count;
}

void TaskSpec::validate() const {
  if (vocab_size < 1) throw ValidationError("vocab_size must be positive");
  if (seq_len < 1) throw ValidationError("seq_len must be positive");
  sequence_count();
  if (kind == TaskKind::kMultiSum) {
    if (modulus < 2) throw ValidationError("multi_sum modulus must be >= 2");
    if (modulus > vocab_size) {
      throw ValidationError(fmt::format(
          "multi_sum modulus {} exceeds vocab_size {}", modulus, vocab_size));
    }
  }
}

std::vector<PromptInstance> generate_prompts(const TaskSpec& spec, int count,
                                             std::uint64_t seed) {
  spec.validate();
  if (count < 1) throw ValidationError("prompt count must be positive");
  const std::uint64_t range = spec.kind == TaskKind::kMultiSum
                                  ? static_cast<std::uint64_t>(spec.modulus)
                                  : spec.sequence_count();
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::uint64_t> target(0, range - 1);
  std::vector<PromptInstance> prompts;
  prompts.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    prompts.push_back({i, spec, target(rng)});
  }
  return prompts;
}

std::uint64_t encode_sequence(std::span<const Token> sequence, int vocab_size) {
  std::uint64_t code = 0;
  for (Token token : sequence) {
    code = code * static_cast<std::uint64_t>(vocab_size) +
           static_cast<std::uint64_t>(token);
  }
  return code;
}

Sequence decode_sequence(std::uint64_t code, int vocab_size, int seq_len) {
  Sequence sequence(static_cast<std::size_t>(seq_len));
  for (int t = seq_len - 1; t >= 0; --t) {
    sequence[t] = static_cast<Token>(code % static_cast<std::uint64_t>(vocab_size));
    code /= static_cast<std::uint64_t>(vocab_size);
  }
  return sequence;
}

int verify(const PromptInstance& prompt, std::span<const Token> sequence) {
  const TaskSpec& task = prompt.task;
  if (static_cast<int>(sequence.size()) != task.seq_len) {
    throw ValidationError(fmt::format("sequence length {} != seq_len {}",
                                      sequence.size(), task.seq_len));
  }
  for (Token token : sequence) {
    if (token < 0 || token >= task.vocab_size) {
      throw ValidationError(fmt::format("token {} outside vocabulary of size {}",
                                        token, task.vocab_size));
    }
  }
  switch (task.kind) {
    case TaskKind::kMultiSum: {
      std::int64_t sum = 0;
      for (Token token : sequence) sum += token;
      return static_cast<std::uint64_t>(sum % task.modulus) == prompt.target ? 1 : -1;
    }
    case TaskKind::kUniqueAnswer:
      return encode_sequence(sequence, task.vocab_size) == prompt.target ? 1 : -1;
  }
  return -1;
}

std::vector<std::uint64_t> correct_codes(const PromptInstance& prompt) {
  const std::uint64_t total = prompt.task.sequence_count();
  std::vector<std::uint64_t> codes;
  if (prompt.task.kind == TaskKind::kUniqueAnswer) {
    if (prompt.target < total) codes.push_back(prompt.target);
    return codes;
  }
  Sequence buffer;
  for (std::uint64_t code = 0; code < total; ++code) {
    buffer = decode_sequence(code, prompt.task.vocab_size, prompt.task.seq_len);
    if (verify(prompt, buffer) == 1) codes.push_back(code);
  }
  return codes;
}

std::vector<Sequence> enumerate_correct(const PromptInstance& prompt) {
  std::vector<Sequence> result;
  for (std::uint64_t code : correct_codes(prompt)) {
    result.push_back(decode_sequence(code, prompt.task.vocab_size, prompt.task.seq_len));
  }
  return result;
}

}  // namespace rlvr
