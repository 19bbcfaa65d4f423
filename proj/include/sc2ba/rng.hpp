#pragma once

#include <cstdint>
#include <random>

namespace sc2ba {

using Rng = std::mt19937_64;

// SplitMix64 finalizer over (base, index). Used to give every episode,
// evaluation and run its own independent stream.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Stream tags so independent consumers of one run seed never collide.
enum class Stream : std::uint64_t {
  Episodes = 1,
  Actions = 2,
  Evaluation = 3,
  Opponents = 4,
  Init = 5,
  Replay = 6,
};

constexpr std::uint64_t stream_seed(std::uint64_t base, Stream s) {
  return derive_seed(base ^ 0xA5A5A5A5A5A5A5A5ULL, static_cast<std::uint64_t>(s));
}

}  // namespace sc2ba
