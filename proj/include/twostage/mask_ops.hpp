// Copyright 2026 The twostage Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "twostage/image.hpp"

namespace twostage {

/// Axis-aligned box in normalized image coordinates, x0 < x1 and y0 < y1.
struct Box {
    double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
    friend bool operator==(const Box&, const Box&) = default;
};

struct Detection {
    Box box;
    double score = 0; // confidence in [0, 1]
    std::string label;
    friend bool operator==(const Detection&, const Detection&) = default;
};

/// Throws std::invalid_argument when the box is inverted or the score is outside [0, 1].
void validate(const Detection& det);

/// Half-open pixel rectangle [x0, x1) x [y0, y1).
struct PixelRect {
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
    long long area() const noexcept {
        return x1 > x0 && y1 > y0 ? static_cast<long long>(x1 - x0) * (y1 - y0) : 0;
    }
};

/// Edges are scaled by the image size, rounded to the nearest pixel boundary
/// and clamped to the image, so adjacent boxes share no pixels.
PixelRect rasterize(const Box& box, int width, int height);

class DegenerateBoxError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Detections with score >= tau, in input order. tau must lie in [0, 1].
std::vector<Detection> filter_detections(std::span<const Detection> dets, double tau);

/// Highest-scoring detection (first on ties). Throws std::invalid_argument if empty.
const Detection& best_detection(std::span<const Detection> dets);

/// |mask ∩ box| / |mask ∪ box| over pixels. Throws DegenerateBoxError when the
/// box covers no pixel.
double box_mask_iou(const Mask& mask, const Box& box);

struct MaskCandidate {
    Mask mask;
    std::optional<double> predicted_quality;
};

struct CandidateScore {
    double iou = 0;
    double area = 0; // set pixels over image pixels
};

struct Selection {
    std::size_t index = 0;
    double score = 0;
    double iou = 0;
    double area = 0;
};

/// argmax_i (iou_i - lambda * area_i); the lowest index wins ties.
/// Throws std::invalid_argument on an empty list or negative lambda.
Selection select_by_scores(std::span<const CandidateScore> scores, double lambda);

/// Scores every candidate against `box` and applies select_by_scores.
Selection select_mask(std::span<const MaskCandidate> candidates, const Box& box, double lambda);

/// Binary dilation by a Euclidean disc: a pixel is set when some set pixel lies
/// within `radius`. Output values are 0 or 1 and keep the input threshold.
Mask dilate(const Mask& mask, double radius);

/// Tight normalized bounding box of the set pixels; nullopt for an empty mask.
std::optional<Box> bounding_box(const Mask& mask);

} // namespace twostage
