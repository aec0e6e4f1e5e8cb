// Copyright 2026 The twostage Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include "twostage/image.hpp"

namespace twostage {

struct SsimParams {
    int window = 8;           // uniform square window, stride 1, valid positions only
    double dynamic_range = 1; // L
    double k1 = 0.01;         // C1 = (k1 L)^2
    double k2 = 0.03;         // C2 = (k2 L)^2
};

/// Mean local SSIM of two single-channel images of equal size. Images smaller
/// than the window use a window clipped to the image. Throws ShapeError on
/// mismatched dimensions or multi-channel input.
double ssim(const ImageBuffer& a, const ImageBuffer& b, const SsimParams& params = {});

} // namespace twostage
