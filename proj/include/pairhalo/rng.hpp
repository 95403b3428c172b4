#pragma once

#include <cstdint>
#include <random>

namespace pairhalo {

/// Independent random streams used by the simulation.
enum class Stream : std::uint64_t { halo = 1, detector = 2, shuffle = 3, synthetic = 4 };

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Per-shot generator; depends only on (master seed, shot id, stream) so shots
/// can be generated in any order or in parallel.
inline std::mt19937_64 shot_rng(std::uint64_t master_seed, std::int64_t shot_id, Stream stream) {
  const std::uint64_t s = splitmix64(master_seed ^ splitmix64(static_cast<std::uint64_t>(shot_id) ^
                                                              splitmix64(static_cast<std::uint64_t>(stream))));
  return std::mt19937_64(s);
}

}  // namespace pairhalo
