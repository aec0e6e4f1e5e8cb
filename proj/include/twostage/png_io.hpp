// Copyright 2026 The twostage Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

#include "twostage/image.hpp"

namespace twostage {

class PngError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Decodes 8- or 16-bit PNG. Palette images expand to RGB, alpha is dropped,
/// gray+alpha becomes single-channel. Samples map to [0, 1].
ImageBuffer decode_png(std::span<const std::byte> bytes);

/// Encodes with the given bit depth (8 or 16); samples are clamped to [0, 1]
/// and rounded to the nearest code.
std::vector<std::byte> encode_png(const ImageBuffer& img, int bit_depth = 8);

ImageBuffer read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const ImageBuffer& img, int bit_depth = 8);

Mask read_mask_png(const std::filesystem::path& path, float threshold = 0.5f);
void write_mask_png(const std::filesystem::path& path, const Mask& mask);

/// Round-trips an image through 8-bit quantization, matching what a PNG
/// artifact written with bit_depth 8 decodes to.
ImageBuffer quantize8(const ImageBuffer& img);

std::vector<std::byte> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::byte> bytes);

} // namespace twostage
