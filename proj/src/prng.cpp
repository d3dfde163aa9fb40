// SPDX-License-Identifier: Apache-2.0
#include "kinmerge/prng.hpp"

namespace kinmerge {

std::uint64_t SplitMix64::below(std::uint64_t bound) noexcept {
  // reject the low sliver that would bias the modulo
  const std::uint64_t threshold = (0 - bound) % bound;
  for (;;) {
    const std::uint64_t r = next();
    if (r >= threshold) return r % bound;
  }
}

}  // namespace kinmerge
