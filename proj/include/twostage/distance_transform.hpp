// Copyright 2026 The twostage Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "twostage/image.hpp"

namespace twostage {

class EmptyMaskError : public std::runtime_error {
public:
    EmptyMaskError() : std::runtime_error("mask has no set pixels") {}
};

/// Euclidean distance (pixels) from each pixel to the nearest set mask pixel.
class DistanceField {
public:
    DistanceField(int width, int height, std::vector<float> data)
        : width_(width), height_(height), data_(std::move(data)) {}

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    float at(int x, int y) const noexcept { return data_[static_cast<std::size_t>(y) * width_ + x]; }
    std::span<const float> data() const noexcept { return data_; }

private:
    int width_;
    int height_;
    std::vector<float> data_;
};

/// Exact squared distances as integers (row-major). Throws EmptyMaskError.
std::vector<std::int64_t> squared_distance_transform(const Mask& mask);

/// sqrt of squared_distance_transform, rounded once to f32. Throws EmptyMaskError.
DistanceField distance_transform(const Mask& mask);

} // namespace twostage
