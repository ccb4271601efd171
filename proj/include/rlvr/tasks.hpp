#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rlvr {

using Token = int;
using Sequence = std::vector<Token>;

// Upper bound on vocab_size^seq_len for anything that enumerates sequences.
inline constexpr std::uint64_t kMaxEnumeration = 10'000'000;

enum class TaskKind { kMultiSum, kUniqueAnswer };

std::string_view to_string(TaskKind kind);
TaskKind parse_task_kind(std::string_view name);

struct TaskSpec {
  TaskKind kind = TaskKind::kMultiSum;
  int vocab_size = 5;
  int seq_len = 3;
  int modulus = 5;  // MULTI_SUM only

  // vocab_size^seq_len; throws EnumerationBoundError past kMaxEnumeration.
  std::uint64_t sequence_count() const;

  // Throws ValidationError / EnumerationBoundError on invariant violations.
  void validate() const;

  bool operator==(const TaskSpec&) const = default;
};

struct PromptInstance {
  int prompt_id = 0;
  TaskSpec task;
  std::uint64_t target = 0;  // residue for MULTI_SUM, sequence index for UNIQUE_ANSWER

  bool operator==(const PromptInstance&) const = default;
};

std::vector<PromptInstance> generate_prompts(const TaskSpec& spec, int count,
                                             std::uint64_t seed);

// +1 if the sequence solves the prompt, -1 otherwise.
int verify(const PromptInstance& prompt, std::span<const Token> sequence);

// Lexicographic (base-vocab, most significant token first) sequence codes.
std::uint64_t encode_sequence(std::span<const Token> sequence, int vocab_size);
Sequence decode_sequence(std::uint64_t code, int vocab_size, int seq_len);

// Codes of all correct sequences in ascending order.
std::vector<std::uint64_t> correct_codes(const PromptInstance& prompt);

std::vector<Sequence> enumerate_correct(const PromptInstance& prompt);

}  // namespace rlvr
