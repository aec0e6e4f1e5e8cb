// Copyright 2026 The twostage Authors
// SPDX-License-Identifier: Apache-2.0
//
// Exact Euclidean distance transform via separable lower envelopes of
// parabolas (Felzenszwalb & Huttenlocher). All distances stay integral.

#include "twostage/distance_transform.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace twostage {

namespace {

constexpr std::int64_t kInf = std::numeric_limits<std::int64_t>::max() / 4;

// In place: f[q] <- min_p (f[p] + (q - p)^2), skipping infinite f[p].
void envelope_1d(std::vector<std::int64_t>& f, std::vector<int>& v, std::vector<double>& z,
                 std::vector<std::int64_t>& out) {
    const int n = static_cast<int>(f.size());
    int k = -1;
    for (int q = 0; q < n; ++q) {
        if (f[static_cast<std::size_t>(q)] >= kInf) {
            continue;
        }
        const double fq = static_cast<double>(f[static_cast<std::size_t>(q)]) + static_cast<double>(q) * q;
        while (k >= 0) {
            const int p = v[static_cast<std::size_t>(k)];
            const double fp = static_cast<double>(f[static_cast<std::size_t>(p)]) + static_cast<double>(p) * p;
            const double s = (fq - fp) / (2.0 * (q - p));
            if (s <= z[static_cast<std::size_t>(k)]) {
                --k;
            } else {
                break;
            }
        }
        ++k;
        v[static_cast<std::size_t>(k)] = q;
        if (k == 0) {
            z[0] = -std::numeric_limits<double>::infinity();
        } else {
            const int p = v[static_cast<std::size_t>(k - 1)];
            const double fp = static_cast<double>(f[static_cast<std::size_t>(p)]) + static_cast<double>(p) * p;
            z[static_cast<std::size_t>(k)] = (fq - fp) / (2.0 * (q - p));
        }
    }
    if (k < 0) {
        std::fill(out.begin(), out.end(), kInf);
        return;
    }
    // Each envelope segment k covers q in (z[k], z[k+1]]; evaluate the exact
    // integer value of the winning parabola, and its neighbour across a
    // boundary, so floating-point breakpoints cannot pick a worse one.
    int seg = 0;
    for (int q = 0; q < n; ++q) {
        while (seg < k && z[static_cast<std::size_t>(seg + 1)] < q) {
            ++seg;
        }
        auto eval = [&](int s) {
            const int p = v[static_cast<std::size_t>(s)];
            const std::int64_t d = q - p;
            return f[static_cast<std::size_t>(p)] + d * d;
        };
        std::int64_t best = eval(seg);
        if (seg < k) best = std::min(best, eval(seg + 1));
        if (seg > 0) best = std::min(best, eval(seg - 1));
        out[static_cast<std::size_t>(q)] = best;
    }
}

} // namespace

std::vector<std::int64_t> squared_distance_transform(const Mask& mask) {
    const int w = mask.width();
    const int h = mask.height();
    if (mask.count_set() == 0) {
        throw EmptyMaskError();
    }
    std::vector<std::int64_t> grid(static_cast<std::size_t>(w) * h);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        grid[i] = mask.is_set(i) ? 0 : kInf;
    }

    const int n = std::max(w, h);
    std::vector<int> v(static_cast<std::size_t>(n));
    std::vector<double> z(static_cast<std::size_t>(n) + 1);

    std::vector<std::int64_t> f(static_cast<std::size_t>(h));
    std::vector<std::int64_t> out(static_cast<std::size_t>(h));
    for (int x = 0; x < w; ++x) {
        for (int y = 0; y < h; ++y) f[static_cast<std::size_t>(y)] = grid[static_cast<std::size_t>(y) * w + x];
        envelope_1d(f, v, z, out);
        for (int y = 0; y < h; ++y) grid[static_cast<std::size_t>(y) * w + x] = out[static_cast<std::size_t>(y)];
    }

    f.resize(static_cast<std::size_t>(w));
    out.resize(static_cast<std::size_t>(w));
    for (int y = 0; y < h; ++y) {
        auto row = grid.begin() + static_cast<std::ptrdiff_t>(y) * w;
        std::copy(row, row + w, f.begin());
        envelope_1d(f, v, z, out);
        std::copy(out.begin(), out.end(), row);
    }
    return grid;
}

DistanceField distance_transform(const Mask& mask) {
    const auto squared = squared_distance_transform(mask);
    std::vector<float> data(squared.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        data[i] = static_cast<float>(std::sqrt(static_cast<double>(squared[i])));
    }
    return DistanceField(mask.width(), mask.height(), std::move(data));
}

} // namespace twostage
