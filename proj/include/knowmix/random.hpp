// SPDX-License-Identifier: Apache-2.0
//
// Portable seeded randomness. Engines from <random> are specified bit-exactly
// but the distributions are not, so bounded draws and shuffles live here.

#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <utility>

namespace knowmix {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Seed for item \p index of an independent stream \p stream under one
/// master seed. Items can be generated in any order or in parallel.
constexpr std::uint64_t stream_seed(std::uint64_t master, std::uint64_t stream,
                                    std::uint64_t index) noexcept {
  return splitmix64(splitmix64(master ^ splitmix64(stream)) + index);
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t master, std::uint64_t stream, std::uint64_t index) {
  return Rng(stream_seed(master, stream, index));
}

/// Uniform integer in [0, bound) by rejection; bound must be > 0.
inline std::uint64_t uniform_below(Rng& rng, std::uint64_t bound) {
  const std::uint64_t limit = std::uint64_t(-bound) % bound;  // 2^64 mod bound
  for (;;) {
    const std::uint64_t draw = rng();
    if (draw >= limit) return draw % bound;
  }
}

/// Uniform double in [0, 1) with 53 random bits.
inline double uniform_unit(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

template <typename T>
void shuffle(std::span<T> items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform_below(rng, i));
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace knowmix
