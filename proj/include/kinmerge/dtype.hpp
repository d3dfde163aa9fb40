// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>

namespace kinmerge {

enum class ElementType : std::uint8_t { f32, f16, bf16 };

constexpr std::size_t element_size(ElementType t) noexcept {
  return t == ElementType::f32 ? 4 : 2;
}

/// Container spelling: "F32", "F16", "BF16".
std::string_view to_string(ElementType t) noexcept;
std::optional<ElementType> parse_element_type(std::string_view s) noexcept;

// Scalar reference conversions. Widening is exact; narrowing rounds to
// nearest-even, saturates to infinity on overflow and keeps NaNs quiet.
float f16_to_f32(std::uint16_t h) noexcept;
float bf16_to_f32(std::uint16_t h) noexcept;
std::uint16_t f32_to_f16(float f) noexcept;
std::uint16_t f32_to_bf16(float f) noexcept;

}  // namespace kinmerge
