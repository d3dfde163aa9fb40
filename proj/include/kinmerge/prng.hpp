// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

namespace kinmerge {

// SplitMix64 constants (Steele, Lea & Flood 2014). The exact algorithm is
// spelled out in docs/prng.md so other implementations can reproduce streams.
inline constexpr std::uint64_t kGoldenGamma = 0x9E3779B97F4A7C15ull;

constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

/// Counter-based generator: value i of stream (seed, stream) is a pure
/// function of (seed, stream, i), so draws can be taken in any order or in
/// parallel without changing results.
class CounterRng {
 public:
  constexpr CounterRng(std::uint64_t seed, std::uint64_t stream) noexcept
      : key_(mix64(mix64(seed) + (stream + 1) * kGoldenGamma)) {}

  constexpr std::uint64_t at(std::uint64_t counter) const noexcept {
    return mix64(key_ + counter * kGoldenGamma);
  }

  /// Uniform double in [0, 1) from the top 53 bits.
  constexpr double uniform(std::uint64_t counter) const noexcept {
    return static_cast<double>(at(counter) >> 11) * 0x1.0p-53;
  }

 private:
  std::uint64_t key_;
};

/// Sequential SplitMix64 stream.
class SplitMix64 {
 public:
  explicit constexpr SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

  constexpr std::uint64_t next() noexcept {
    state_ += kGoldenGamma;
    return mix64(state_);
  }

  /// Unbiased integer in [0, bound) by rejection; bound must be > 0.
  std::uint64_t below(std::uint64_t bound) noexcept;

 private:
  std::uint64_t state_;
};

}  // namespace kinmerge
