// Copyright 2026 The twostage Authors
// SPDX-License-Identifier: Apache-2.0
//

#include "twostage/mask_ops.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "twostage/distance_transform.hpp"

namespace twostage {

void validate(const Detection& det) {
    const Box& b = det.box;
    if (!(b.x0 < b.x1) || !(b.y0 < b.y1)) {
        throw std::invalid_argument(
            fmt::format("detection '{}' has an inverted box [{}, {}, {}, {}]", det.label, b.x0, b.y0, b.x1, b.y1));
    }
    if (!(det.score >= 0.0 && det.score <= 1.0)) {
        throw std::invalid_argument(fmt::format("detection '{}' score {} outside [0, 1]", det.label, det.score));
    }
}

PixelRect rasterize(const Box& box, int width, int height) {
    auto edge = [](double v, int size) {
        return static_cast<int>(std::clamp(std::floor(v * size + 0.5), 0.0, static_cast<double>(size)));
    };
    return {edge(box.x0, width), edge(box.y0, height), edge(box.x1, width), edge(box.y1, height)};
}

std::vector<Detection> filter_detections(std::span<const Detection> dets, double tau) {
    if (!(tau >= 0.0 && tau <= 1.0)) {
        throw std::invalid_argument(fmt::format("tau must lie in [0, 1], got {}", tau));
    }
    std::vector<Detection> kept;
    std::copy_if(dets.begin(), dets.end(), std::back_inserter(kept),
                 [tau](const Detection& d) { return d.score >= tau; });
    return kept;
}

const Detection& best_detection(std::span<const Detection> dets) {
    if (dets.empty()) {
        throw std::invalid_argument("no detections to choose from");
    }
    const Detection* best = &dets.front();
    for (const auto& d : dets) {
        if (d.score > best->score) {
            best = &d;
        }
    }
    return *best;
}

double box_mask_iou(const Mask& mask, const Box& box) {
    const PixelRect rect = rasterize(box, mask.width(), mask.height());
    if (rect.area() == 0) {
        throw DegenerateBoxError(fmt::format("box [{}, {}, {}, {}] covers no pixels of a {}x{} image", box.x0, box.y0,
                                             box.x1, box.y1, mask.width(), mask.height()));
    }
    long long inter = 0;
    for (int y = rect.y0; y < rect.y1; ++y) {
        for (int x = rect.x0; x < rect.x1; ++x) {
            inter += mask.is_set(x, y) ? 1 : 0;
        }
    }
    const long long uni = static_cast<long long>(mask.count_set()) + rect.area() - inter;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

Selection select_by_scores(std::span<const CandidateScore> scores, double lambda) {
    if (scores.empty()) {
        throw std::invalid_argument("select_mask needs at least one candidate");
    }
    if (!(lambda >= 0.0)) {
        throw std::invalid_argument(fmt::format("selection lambda must be non-negative, got {}", lambda));
    }
    Selection best;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const double s = scores[i].iou - lambda * scores[i].area;
        if (i == 0 || s > best.score) {
            best = {i, s, scores[i].iou, scores[i].area};
        }
    }
    return best;
}

Selection select_mask(std::span<const MaskCandidate> candidates, const Box& box, double lambda) {
    std::vector<CandidateScore> scores;
    scores.reserve(candidates.size());
    for (const auto& c : candidates) {
        scores.push_back({box_mask_iou(c.mask, box), c.mask.area_fraction()});
    }
    return select_by_scores(scores, lambda);
}

Mask dilate(const Mask& mask, double radius) {
    if (!(radius >= 0.0)) {
        throw std::invalid_argument(fmt::format("dilation radius must be non-negative, got {}", radius));
    }
    Mask out(mask.width(), mask.height(), 0.0f, mask.threshold());
    if (mask.count_set() == 0) {
        return out;
    }
    const auto squared = squared_distance_transform(mask);
    const double r2 = radius * radius;
    for (std::size_t i = 0; i < squared.size(); ++i) {
        out.data()[i] = static_cast<double>(squared[i]) <= r2 ? 1.0f : 0.0f;
    }
    return out;
}

std::optional<Box> bounding_box(const Mask& mask) {
    int x0 = mask.width(), y0 = mask.height(), x1 = -1, y1 = -1;
    for (int y = 0; y < mask.height(); ++y) {
        for (int x = 0; x < mask.width(); ++x) {
            if (mask.is_set(x, y)) {
                x0 = std::min(x0, x);
                y0 = std::min(y0, y);
                x1 = std::max(x1, x);
                y1 = std::max(y1, y);
            }
        }
    }
    if (x1 < 0) {
        return std::nullopt;
    }
    const double w = mask.width();
    const double h = mask.height();
    return Box{x0 / w, y0 / h, (x1 + 1) / w, (y1 + 1) / h};
}

} // namespace twostage
