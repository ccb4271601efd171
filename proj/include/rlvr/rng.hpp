#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace rlvr {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Independent stream keyed by (seed, tags...). The same key always yields the
// same stream, so parallel or reordered sampling produces identical draws.
inline Rng substream(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) {
  std::uint64_t h = splitmix64(seed);
  for (std::uint64_t tag : tags) h = splitmix64(h ^ splitmix64(tag + 0x632be59bd9b4e019ULL));
  return Rng(h);
}

// Stream tags, kept distinct so training, evaluation and init never share draws.
enum class StreamPurpose : std::uint64_t {
  kInit = 1,
  kRollout = 2,
  kEvaluation = 3,
  kPrompts = 4,
};

inline std::uint64_t purpose_tag(StreamPurpose p) { return static_cast<std::uint64_t>(p); }

}  // namespace rlvr
