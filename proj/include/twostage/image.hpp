// Copyright 2026 The twostage Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace twostage {

/// Row-major interleaved f32 raster with 1 or 3 channels, samples nominally in [0, 1].
class ImageBuffer {
public:
    ImageBuffer() = default;
    ImageBuffer(int width, int height, int channels, float fill = 0.0f);
    ImageBuffer(int width, int height, int channels, std::vector<float> data);

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    int channels() const noexcept { return channels_; }
    std::size_t pixel_count() const noexcept { return static_cast<std::size_t>(width_) * height_; }
    bool empty() const noexcept { return data_.empty(); }

    float& at(int x, int y, int c = 0) noexcept { return data_[index(x, y, c)]; }
    float at(int x, int y, int c = 0) const noexcept { return data_[index(x, y, c)]; }

    std::span<float> data() noexcept { return data_; }
    std::span<const float> data() const noexcept { return data_; }

    bool same_shape(const ImageBuffer& other) const noexcept {
        return width_ == other.width_ && height_ == other.height_ && channels_ == other.channels_;
    }

    friend bool operator==(const ImageBuffer&, const ImageBuffer&) = default;

private:
    std::size_t index(int x, int y, int c) const noexcept {
        return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
    }

    int width_ = 0;
    int height_ = 0;
    int channels_ = 0;
    std::vector<float> data_;
};

/// Single-channel soft mask; a pixel is "set" when its value >= threshold.
class Mask {
public:
    Mask() = default;
    Mask(int width, int height, float fill = 0.0f, float threshold = 0.5f);
    Mask(int width, int height, std::vector<float> data, float threshold = 0.5f);

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    float threshold() const noexcept { return threshold_; }
    std::size_t pixel_count() const noexcept { return data_.size(); }

    float& at(int x, int y) noexcept { return data_[static_cast<std::size_t>(y) * width_ + x]; }
    float at(int x, int y) const noexcept { return data_[static_cast<std::size_t>(y) * width_ + x]; }
    bool is_set(int x, int y) const noexcept { return at(x, y) >= threshold_; }
    bool is_set(std::size_t i) const noexcept { return data_[i] >= threshold_; }

    std::size_t count_set() const noexcept;
    /// Set-pixel count over total pixel count.
    double area_fraction() const noexcept;

    std::span<float> data() noexcept { return data_; }
    std::span<const float> data() const noexcept { return data_; }

    friend bool operator==(const Mask&, const Mask&) = default;

private:
    int width_ = 0;
    int height_ = 0;
    float threshold_ = 0.5f;
    std::vector<float> data_;
};

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Rec. 601 luma for 3-channel images; single-channel input is returned as is.
ImageBuffer to_luma(const ImageBuffer& img);

/// Area-weighted resampling to the requested size.
ImageBuffer resize(const ImageBuffer& img, int width, int height);

/// Clamps every sample into [0, 1].
void clamp_unit(ImageBuffer& img) noexcept;

/// Treats a single-channel image as mask values.
Mask mask_from_image(const ImageBuffer& img, float threshold = 0.5f);
ImageBuffer image_from_mask(const Mask& mask);

} // namespace twostage
