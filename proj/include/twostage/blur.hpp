// Copyright 2026 The twostage Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <string_view>
#include <vector>

#include "twostage/image.hpp"

namespace twostage {

/// Normalized, radially symmetric Gaussian kernel sampled on the integer grid
/// centred at 0. The 2D weights are the outer product of `taps()`.
class Kernel {
public:
    int size() const noexcept { return size_; }
    int radius() const noexcept { return size_ / 2; }
    double sigma() const noexcept { return sigma_; }

    /// Normalized 1D factor, length size().
    const std::vector<double>& taps() const noexcept { return taps_; }
    /// 2D weight at offset (dx, dy) from the centre, each in [-radius, radius].
    double weight(int dx, int dy) const noexcept {
        return taps_[static_cast<std::size_t>(dx + radius())] * taps_[static_cast<std::size_t>(dy + radius())];
    }
    /// Full size x size weights, row-major.
    std::vector<double> weights() const;

private:
    friend Kernel gaussian_kernel(int size, double sigma);
    Kernel(int size, double sigma, std::vector<double> taps) : size_(size), sigma_(sigma), taps_(std::move(taps)) {}

    int size_;
    double sigma_;
    std::vector<double> taps_;
};

/// Throws std::invalid_argument for even/non-positive size or sigma <= 0.
Kernel gaussian_kernel(int size, double sigma);

/// Separable 2D convolution with clamp-to-edge padding.
ImageBuffer gaussian_blur(const ImageBuffer& img, const Kernel& kernel);

/// Blur only where the mask is set; other pixels keep their original values.
ImageBuffer masked_blur(const ImageBuffer& img, const Mask& mask, const Kernel& kernel);

enum class DecayNormalization {
    diagonal, // distance divided by the image diagonal
    pixels,   // raw pixel distance
};

std::string_view to_string(DecayNormalization n) noexcept;
DecayNormalization parse_decay_normalization(std::string_view text);

/// Per-pixel blend weights exp(-lambda * d_hat), where d_hat is the (normalized)
/// distance to the nearest set mask pixel. Throws EmptyMaskError for an empty mask
/// and std::invalid_argument for negative lambda.
std::vector<float> decay_weights(const Mask& mask, double lambda,
                                 DecayNormalization normalization = DecayNormalization::diagonal);

/// out = w * gaussian_blur(img) + (1 - w) * img with w from decay_weights.
/// Inside the mask w = 1, so the output there is exactly the plain blur.
ImageBuffer decay_blur(const ImageBuffer& img, const Mask& mask, const Kernel& kernel, double lambda,
                       DecayNormalization normalization = DecayNormalization::diagonal);

} // namespace twostage
