// Copyright 2026 The twostage Authors
// SPDX-License-Identifier: Apache-2.0
//

#include "twostage/image.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

namespace twostage {

namespace {

void check_dims(int width, int height) {
    if (width <= 0 || height <= 0) {
        throw ShapeError(fmt::format("image dimensions must be positive, got {}x{}", width, height));
    }
}

// Input-pixel coverage of one output pixel along an axis.
struct Span1D {
    int first;
    std::vector<double> weights;
};

std::vector<Span1D> area_spans(int in_size, int out_size) {
    std::vector<Span1D> spans(static_cast<std::size_t>(out_size));
    const double scale = static_cast<double>(in_size) / out_size;
    for (int o = 0; o < out_size; ++o) {
        const double lo = o * scale;
        const double hi = (o + 1) * scale;
        auto& span = spans[static_cast<std::size_t>(o)];
        span.first = static_cast<int>(std::floor(lo));
        const int last = std::min(in_size - 1, static_cast<int>(std::ceil(hi)) - 1);
        double total = 0.0;
        for (int i = span.first; i <= last; ++i) {
            const double w = std::min<double>(hi, i + 1) - std::max<double>(lo, i);
            span.weights.push_back(w);
            total += w;
        }
        for (double& w : span.weights) {
            w /= total;
        }
    }
    return spans;
}

} // namespace

ImageBuffer::ImageBuffer(int width, int height, int channels, float fill)
    : width_(width), height_(height), channels_(channels) {
    check_dims(width, height);
    if (channels != 1 && channels != 3) {
        throw ShapeError(fmt::format("images have 1 or 3 channels, got {}", channels));
    }
    data_.assign(static_cast<std::size_t>(width) * height * channels, fill);
}

ImageBuffer::ImageBuffer(int width, int height, int channels, std::vector<float> data)
    : ImageBuffer(width, height, channels) {
    if (data.size() != data_.size()) {
        throw ShapeError(fmt::format("{}x{}x{} image needs {} samples, got {}", width, height, channels,
                                     data_.size(), data.size()));
    }
    for (float v : data) {
        if (!std::isfinite(v)) {
            throw ShapeError("image samples must be finite");
        }
    }
    data_ = std::move(data);
}

Mask::Mask(int width, int height, float fill, float threshold)
    : width_(width), height_(height), threshold_(threshold) {
    check_dims(width, height);
    data_.assign(static_cast<std::size_t>(width) * height, fill);
}

Mask::Mask(int width, int height, std::vector<float> data, float threshold) : Mask(width, height, 0.0f, threshold) {
    if (data.size() != data_.size()) {
        throw ShapeError(fmt::format("{}x{} mask needs {} samples, got {}", width, height, data_.size(), data.size()));
    }
    data_ = std::move(data);
}

std::size_t Mask::count_set() const noexcept {
    return static_cast<std::size_t>(
        std::count_if(data_.begin(), data_.end(), [t = threshold_](float v) { return v >= t; }));
}

double Mask::area_fraction() const noexcept {
    return data_.empty() ? 0.0 : static_cast<double>(count_set()) / static_cast<double>(data_.size());
}

ImageBuffer to_luma(const ImageBuffer& img) {
    if (img.channels() == 1) {
        return img;
    }
    ImageBuffer out(img.width(), img.height(), 1);
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            out.at(x, y) = static_cast<float>(0.299 * img.at(x, y, 0) + 0.587 * img.at(x, y, 1) +
                                              0.114 * img.at(x, y, 2));
        }
    }
    return out;
}

ImageBuffer resize(const ImageBuffer& img, int width, int height) {
    check_dims(width, height);
    if (width == img.width() && height == img.height()) {
        return img;
    }
    const auto xs = area_spans(img.width(), width);
    const auto ys = area_spans(img.height(), height);
    ImageBuffer out(width, height, img.channels());
    for (int oy = 0; oy < height; ++oy) {
        const auto& sy = ys[static_cast<std::size_t>(oy)];
        for (int ox = 0; ox < width; ++ox) {
            const auto& sx = xs[static_cast<std::size_t>(ox)];
            for (int c = 0; c < img.channels(); ++c) {
                double acc = 0.0;
                for (std::size_t j = 0; j < sy.weights.size(); ++j) {
                    double row = 0.0;
                    for (std::size_t i = 0; i < sx.weights.size(); ++i) {
                        row += sx.weights[i] * img.at(sx.first + static_cast<int>(i), sy.first + static_cast<int>(j), c);
                    }
                    acc += sy.weights[j] * row;
                }
                out.at(ox, oy, c) = static_cast<float>(acc);
            }
        }
    }
    return out;
}

void clamp_unit(ImageBuffer& img) noexcept {
    for (float& v : img.data()) {
        v = std::clamp(v, 0.0f, 1.0f);
    }
}

Mask mask_from_image(const ImageBuffer& img, float threshold) {
    const ImageBuffer luma = to_luma(img);
    return Mask(luma.width(), luma.height(), std::vector<float>(luma.data().begin(), luma.data().end()), threshold);
}

ImageBuffer image_from_mask(const Mask& mask) {
    return ImageBuffer(mask.width(), mask.height(), 1,
                       std::vector<float>(mask.data().begin(), mask.data().end()));
}

} // namespace twostage
