// Copyright 2026 The twostage Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <bit>
#include <cstdint>
#include <optional>
#include <string_view>

namespace twostage {

enum class DType { f32, f16, bf16 };

constexpr std::size_t dtype_size(DType t) noexcept {
    return t == DType::f32 ? 4 : 2;
}

/// Container spelling ("F32", "F16", "BF16").
std::string_view dtype_name(DType t) noexcept;
std::optional<DType> parse_dtype(std::string_view name) noexcept;

inline float bf16_to_f32(std::uint16_t bits) noexcept {
    return std::bit_cast<float>(static_cast<std::uint32_t>(bits) << 16);
}

// Round to nearest even; NaN stays NaN.
inline std::uint16_t f32_to_bf16(float value) noexcept {
    std::uint32_t bits = std::bit_cast<std::uint32_t>(value);
    if ((bits & 0x7F800000u) == 0x7F800000u && (bits & 0x007FFFFFu) != 0) {
        return static_cast<std::uint16_t>((bits >> 16) | 0x0040u);
    }
    bits += 0x7FFFu + ((bits >> 16) & 1u);
    return static_cast<std::uint16_t>(bits >> 16);
}

float f16_to_f32(std::uint16_t bits) noexcept;
std::uint16_t f32_to_f16(float value) noexcept;

} // namespace twostage
