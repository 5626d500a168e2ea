#pragma once

#include <cstdint>
#include <random>

namespace scanvar {

// SplitMix64 finalizer. Used to derive independent stream seeds from a
// master seed and a counter; the constants are the published ones and must
// not change, or every seeded result in the project changes with them.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Seed for stream `counter` under `master`.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t counter) noexcept {
  return mix64(master ^ mix64(counter + 0x632be59bd9b4e019ULL));
}

using engine = std::mt19937_64;

// Uniform draw in [0, 1) from the top 53 bits. Written out rather than using
// std::uniform_real_distribution so results do not depend on the standard
// library implementation.
inline double uniform01(engine& gen) {
  return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

} // namespace scanvar
