#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "rlvr/errors.hpp"
#include "rlvr/trainer.hpp"

namespace rlvr {

inline constexpr int kCheckpointVersion = 1;

class CheckpointFormatError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Text checkpoint, one logit row per line keyed by (prompt_id, prefix):
//
//   rlvr-checkpoint 1
//   task <kind> <vocab_size> <seq_len> <modulus>
//   step <n>
//   prompts <count>
//   <prompt_id> <target>                  (count lines)
//   baselines <b_0> ... <b_{count-1}>
//   optimizer <sgd|adam> <update_count>
//   logits <rows>
//   <prompt_id> <prefix> <z_0> ... <z_{V-1}>   (prefix "-" when empty, else "1.0.3")
//   [first_moment <rows> / second_moment <rows> blocks, adam only]
//   end
//
// Reals use the shortest representation that round-trips, so save(load(x)) is
// byte-identical to x.
void write_checkpoint(std::ostream& out, const Checkpoint& checkpoint);
Checkpoint read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::string checkpoint_filename(int step);

}  // namespace rlvr
