// Copyright 2026 The twostage Authors
// SPDX-License-Identifier: Apache-2.0
//

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "twostage/blur.hpp"
#include "twostage/distance_transform.hpp"

namespace twostage {

std::vector<double> Kernel::weights() const {
    std::vector<double> out(static_cast<std::size_t>(size_) * size_);
    for (int dy = -radius(); dy <= radius(); ++dy) {
        for (int dx = -radius(); dx <= radius(); ++dx) {
            out[static_cast<std::size_t>(dy + radius()) * size_ + (dx + radius())] = weight(dx, dy);
        }
    }
    return out;
}

Kernel gaussian_kernel(int size, double sigma) {
    if (size < 1 || size % 2 == 0) {
        throw std::invalid_argument(fmt::format("kernel size must be odd and positive, got {}", size));
    }
    if (!(sigma > 0.0)) {
        throw std::invalid_argument(fmt::format("kernel sigma must be positive, got {}", sigma));
    }
    // G(x, y) = exp(-(x^2 + y^2) / (2 sigma^2)) / (2 pi sigma^2) factors into
    // g(x) g(y); normalizing g normalizes the 2D kernel.
    const int r = size / 2;
    std::vector<double> taps(static_cast<std::size_t>(size));
    const double norm = 1.0 / std::sqrt(2.0 * std::numbers::pi * sigma * sigma);
    double total = 0.0;
    for (int x = -r; x <= r; ++x) {
        const double g = norm * std::exp(-static_cast<double>(x) * x / (2.0 * sigma * sigma));
        taps[static_cast<std::size_t>(x + r)] = g;
        total += g;
    }
    for (double& t : taps) {
        t /= total;
    }
    return Kernel(size, sigma, std::move(taps));
}

ImageBuffer gaussian_blur(const ImageBuffer& img, const Kernel& kernel) {
    const int w = img.width();
    const int h = img.height();
    const int ch = img.channels();
    const int r = kernel.radius();
    const auto& taps = kernel.taps();
    if (r == 0) {
        return img;
    }

    // Horizontal pass into a double buffer, then vertical pass. Each output is
    // a fixed-order sum over taps, so results do not depend on scheduling.
    std::vector<double> tmp(static_cast<std::size_t>(w) * h * ch);
    std::vector<int> xs(static_cast<std::size_t>(w + 2 * r));
    for (int i = 0; i < w + 2 * r; ++i) {
        xs[static_cast<std::size_t>(i)] = std::clamp(i - r, 0, w - 1);
    }
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < ch; ++c) {
                double acc = 0.0;
                for (int k = 0; k < kernel.size(); ++k) {
                    acc += taps[static_cast<std::size_t>(k)] * img.at(xs[static_cast<std::size_t>(x + k)], y, c);
                }
                tmp[(static_cast<std::size_t>(y) * w + x) * ch + c] = acc;
            }
        }
    }

    ImageBuffer out(w, h, ch);
    std::vector<double> acc(static_cast<std::size_t>(w) * ch);
    for (int y = 0; y < h; ++y) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (int k = 0; k < kernel.size(); ++k) {
            const int sy = std::clamp(y + k - r, 0, h - 1);
            const double t = taps[static_cast<std::size_t>(k)];
            const double* row = tmp.data() + static_cast<std::size_t>(sy) * w * ch;
            for (std::size_t i = 0; i < acc.size(); ++i) {
                acc[i] += t * row[i];
            }
        }
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < ch; ++c) {
                out.at(x, y, c) = static_cast<float>(acc[static_cast<std::size_t>(x) * ch + c]);
            }
        }
    }
    return out;
}

ImageBuffer masked_blur(const ImageBuffer& img, const Mask& mask, const Kernel& kernel) {
    if (mask.width() != img.width() || mask.height() != img.height()) {
        throw ShapeError(fmt::format("mask {}x{} does not match image {}x{}", mask.width(), mask.height(),
                                     img.width(), img.height()));
    }
    const ImageBuffer blurred = gaussian_blur(img, kernel);
    ImageBuffer out = img;
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            if (mask.is_set(x, y)) {
                for (int c = 0; c < img.channels(); ++c) {
                    out.at(x, y, c) = blurred.at(x, y, c);
                }
            }
        }
    }
    return out;
}

std::string_view to_string(DecayNormalization n) noexcept {
    return n == DecayNormalization::diagonal ? "diagonal" : "pixels";
}

DecayNormalization parse_decay_normalization(std::string_view text) {
    if (text == "diagonal") return DecayNormalization::diagonal;
    if (text == "pixels") return DecayNormalization::pixels;
    throw std::invalid_argument(fmt::format("unknown decay normalization '{}'", text));
}

std::vector<float> decay_weights(const Mask& mask, double lambda, DecayNormalization normalization) {
    if (!(lambda >= 0.0)) {
        throw std::invalid_argument(fmt::format("lambda must be non-negative, got {}", lambda));
    }
    const DistanceField field = distance_transform(mask);
    const double scale = normalization == DecayNormalization::diagonal
                             ? 1.0 / std::hypot(static_cast<double>(mask.width()), static_cast<double>(mask.height()))
                             : 1.0;
    std::vector<float> w(field.data().size());
    for (std::size_t i = 0; i < w.size(); ++i) {
        w[i] = static_cast<float>(std::exp(-lambda * field.data()[i] * scale));
    }
    return w;
}

ImageBuffer decay_blur(const ImageBuffer& img, const Mask& mask, const Kernel& kernel, double lambda,
                       DecayNormalization normalization) {
    if (mask.width() != img.width() || mask.height() != img.height()) {
        throw ShapeError(fmt::format("mask {}x{} does not match image {}x{}", mask.width(), mask.height(),
                                     img.width(), img.height()));
    }
    const auto weights = decay_weights(mask, lambda, normalization);
    const ImageBuffer blurred = gaussian_blur(img, kernel);
    ImageBuffer out(img.width(), img.height(), img.channels());
    const int ch = img.channels();
    for (std::size_t p = 0; p < weights.size(); ++p) {
        const double w = weights[p];
        for (int c = 0; c < ch; ++c) {
            const std::size_t i = p * static_cast<std::size_t>(ch) + static_cast<std::size_t>(c);
            out.data()[i] = static_cast<float>(w * blurred.data()[i] + (1.0 - w) * img.data()[i]);
        }
    }
    return out;
}

} // namespace twostage
