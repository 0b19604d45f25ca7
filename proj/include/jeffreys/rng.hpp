#pragma once

#include <cstdint>
#include <random>

namespace jeffreys {

using Rng = std::mt19937_64;

// splitmix64 finalizer; used to derive independent stream seeds from a run
// seed plus a purpose tag so that e.g. data and init never share a stream.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (tag + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline Rng make_rng(std::uint64_t seed, std::uint64_t tag) { return Rng(mix_seed(seed, tag)); }

// Stream tags.
namespace stream {
inline constexpr std::uint64_t kSpeakers = 1;
inline constexpr std::uint64_t kUtterances = 2;
inline constexpr std::uint64_t kShift = 3;
inline constexpr std::uint64_t kTrials = 4;
inline constexpr std::uint64_t kInit = 5;
inline constexpr std::uint64_t kShuffle = 6;
}  // namespace stream

}  // namespace jeffreys
