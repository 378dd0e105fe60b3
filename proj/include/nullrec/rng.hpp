#pragma once

#include <cstdint>
#include <random>

namespace nullrec {

using Engine = std::mt19937_64;

/// SplitMix64 finalizer.
constexpr std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30U)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27U)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31U);
}

/// Seed for stream `index` under `base`:
///   derive_seed(base, index) = splitmix64(splitmix64(base) ^ splitmix64(index + 1))
/// A pure function of its arguments, so replication r gets the same stream
/// whichever thread runs it.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  return splitmix64(splitmix64(base) ^ splitmix64(index + 1));
}

/// Sub-streams carved out of one trajectory seed.
enum class Stream : std::uint64_t { kPath = 0, kSplit = 1 };

inline Engine make_engine(std::uint64_t seed, Stream stream) {
  return Engine(derive_seed(seed, static_cast<std::uint64_t>(stream)));
}

}  // namespace nullrec
