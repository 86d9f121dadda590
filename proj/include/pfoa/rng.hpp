#pragma once

#include <cstdint>
#include <cmath>
#include <random>
#include <utility>

namespace pfoa {

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Independent generator for task `index` of stream `stream` under `seed`.
// Results never depend on the order in which tasks are scheduled.
inline std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t stream,
                                   std::uint64_t index = 0) {
  return std::mt19937_64(mix64(mix64(mix64(seed) ^ stream) ^ index));
}

// Uniform double in [0, 1) from the top 53 bits. Used instead of
// std::uniform_real_distribution so draws are identical across standard
// library implementations.
inline double uniform01(std::mt19937_64& gen) {
  return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

// Uniform integer in [0, n).
inline std::uint64_t uniform_index(std::mt19937_64& gen, std::uint64_t n) {
  return static_cast<std::uint64_t>(uniform01(gen) * static_cast<double>(n)) % n;
}

// Standard normal via Box-Muller on uniform01.
inline double standard_normal(std::mt19937_64& gen) {
  double u1 = uniform01(gen);
  while (u1 <= 0.0) u1 = uniform01(gen);
  const double u2 = uniform01(gen);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

// Fisher-Yates with uniform_index, portable across library implementations.
template <typename It>
void shuffle_portable(It first, It last, std::mt19937_64& gen) {
  const auto n = static_cast<std::uint64_t>(last - first);
  for (std::uint64_t i = n; i > 1; --i) {
    const auto j = uniform_index(gen, i);
    std::swap(first[i - 1], first[j]);
  }
}

}  // namespace pfoa
