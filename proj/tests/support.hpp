// Copyright 2026 The twostage Authors
// SPDX-License-Identifier: Apache-2.0
//
// Test-only helpers: a small deterministic generator and scratch directories.

#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "twostage/image.hpp"

namespace twostage::testing {

// SplitMix64; fixed output on every platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    int range(int lo, int hi) { // inclusive
        return lo + static_cast<int>(next() % static_cast<std::uint64_t>(hi - lo + 1));
    }
    bool coin(double p = 0.5) { return uniform() < p; }

private:
    std::uint64_t state_;
};

inline std::vector<float> random_floats(Rng& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
    std::vector<float> v(n);
    for (float& x : v) x = static_cast<float>(rng.uniform(lo, hi));
    return v;
}

inline ImageBuffer random_image(Rng& rng, int w, int h, int ch) {
    return ImageBuffer(w, h, ch, random_floats(rng, static_cast<std::size_t>(w) * h * ch, 0.0, 1.0));
}

inline Mask random_mask(Rng& rng, int w, int h, double p = 0.3) {
    Mask m(w, h);
    for (float& v : m.data()) v = rng.coin(p) ? 1.0f : 0.0f;
    return m;
}

inline Mask rect_mask(int w, int h, int x0, int y0, int x1, int y1) {
    Mask m(w, h);
    for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) m.at(x, y) = 1.0f;
    return m;
}

class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() /
                ("twostage_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const noexcept { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

} // namespace twostage::testing
