// Copyright 2026 The twostage Authors
// SPDX-License-Identifier: Apache-2.0
//

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "twostage/metrics.hpp"

namespace twostage {

std::string_view to_string(EmbeddingSource s) noexcept {
    switch (s) {
    case EmbeddingSource::dino: return "dino";
    case EmbeddingSource::clip_image: return "clip_image";
    case EmbeddingSource::clip_text: return "clip_text";
    }
    return "?";
}

EmbeddingSource parse_embedding_source(std::string_view text) {
    if (text == "dino") return EmbeddingSource::dino;
    if (text == "clip_image") return EmbeddingSource::clip_image;
    if (text == "clip_text") return EmbeddingSource::clip_text;
    throw MetricError(fmt::format("unknown embedding source '{}'", text));
}

double cosine_similarity(std::span<const float> u, std::span<const float> v) {
    if (u.size() != v.size()) {
        throw MetricError(fmt::format("embedding lengths differ: {} vs {}", u.size(), v.size()));
    }
    if (u.empty()) {
        throw MetricError("empty embedding");
    }
    double dot = 0, uu = 0, vv = 0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        dot += static_cast<double>(u[i]) * v[i];
        uu += static_cast<double>(u[i]) * u[i];
        vv += static_cast<double>(v[i]) * v[i];
    }
    if (uu == 0.0 || vv == 0.0) {
        throw MetricError("cosine similarity of a zero-norm embedding");
    }
    return std::clamp(dot / (std::sqrt(uu) * std::sqrt(vv)), -1.0, 1.0);
}

double cosine_similarity(const EmbeddingVector& u, const EmbeddingVector& v) {
    return cosine_similarity(std::span<const float>(u.values), std::span<const float>(v.values));
}

double subject_similarity(std::span<const EmbeddingVector> refs, std::span<const EmbeddingVector> gens) {
    if (refs.empty() || gens.empty()) {
        throw MetricError("subject similarity needs at least one reference and one generated embedding");
    }
    const EmbeddingSource kind = refs.front().source;
    auto check = [kind](const EmbeddingVector& e) {
        if (e.source != kind) {
            throw MetricError(fmt::format("mixed embedding sources: {} and {}", to_string(kind), to_string(e.source)));
        }
    };
    for (const auto& r : refs) check(r);
    for (const auto& g : gens) check(g);

    double sum = 0.0;
    for (const auto& r : refs) {
        for (const auto& g : gens) {
            sum += cosine_similarity(r, g);
        }
    }
    return sum / (static_cast<double>(refs.size()) * static_cast<double>(gens.size()));
}

} // namespace twostage
