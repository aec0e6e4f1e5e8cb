// Copyright 2026 The twostage Authors
// SPDX-License-Identifier: Apache-2.0
//

#include "twostage/ssim.hpp"

#include <algorithm>

#include <fmt/format.h>

namespace twostage {

double ssim(const ImageBuffer& a, const ImageBuffer& b, const SsimParams& params) {
    if (!a.same_shape(b)) {
        throw ShapeError(fmt::format("ssim: {}x{}x{} vs {}x{}x{}", a.width(), a.height(), a.channels(), b.width(),
                                     b.height(), b.channels()));
    }
    if (a.channels() != 1) {
        throw ShapeError("ssim expects single-channel images; convert with to_luma first");
    }
    if (params.window < 1) {
        throw std::invalid_argument("ssim window must be positive");
    }
    const int wx = std::min(params.window, a.width());
    const int wy = std::min(params.window, a.height());
    const double c1 = (params.k1 * params.dynamic_range) * (params.k1 * params.dynamic_range);
    const double c2 = (params.k2 * params.dynamic_range) * (params.k2 * params.dynamic_range);
    const double n = static_cast<double>(wx) * wy;

    // Every term below is written symmetrically in (a, b) so that swapping the
    // arguments, or passing the same image twice, is exact.
    double total = 0.0;
    std::size_t windows = 0;
    for (int y0 = 0; y0 + wy <= a.height(); ++y0) {
        for (int x0 = 0; x0 + wx <= a.width(); ++x0) {
            double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
            for (int y = y0; y < y0 + wy; ++y) {
                for (int x = x0; x < x0 + wx; ++x) {
                    const double va = a.at(x, y);
                    const double vb = b.at(x, y);
                    sa += va;
                    sb += vb;
                    saa += va * va;
                    sbb += vb * vb;
                    sab += va * vb;
                }
            }
            const double mu_a = sa / n;
            const double mu_b = sb / n;
            const double var_a = saa / n - mu_a * mu_a;
            const double var_b = sbb / n - mu_b * mu_b;
            const double cov = sab / n - mu_a * mu_b;
            const double num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2);
            const double den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
            total += num / den;
            ++windows;
        }
    }
    return total / static_cast<double>(windows);
}

} // namespace twostage
