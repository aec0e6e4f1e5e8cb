// Copyright 2026 The twostage Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <filesystem>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "twostage/image.hpp"

namespace twostage {

enum class EmbeddingSource { dino, clip_image, clip_text };

std::string_view to_string(EmbeddingSource s) noexcept;
EmbeddingSource parse_embedding_source(std::string_view text);

struct EmbeddingVector {
    std::vector<float> values;
    EmbeddingSource source = EmbeddingSource::dino;
};

class MetricError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// u.v / (|u| |v|), accumulated in double. Throws MetricError on length
/// mismatch, empty input or a zero-norm vector.
double cosine_similarity(std::span<const float> u, std::span<const float> v);
double cosine_similarity(const EmbeddingVector& u, const EmbeddingVector& v);

/// Mean cosine similarity over all (reference, generated) pairs. Throws
/// MetricError if either set is empty or the sets mix embedding sources.
double subject_similarity(std::span<const EmbeddingVector> refs, std::span<const EmbeddingVector> gens);

// ---------------------------------------------------------------------------
// Natural-scene statistics

struct MscnParams {
    int window = 7;
    double sigma = 7.0 / 6.0;
    double c = 1.0 / 255.0; // stabilizer for samples in [0, 1]
};

/// Mean-subtracted contrast-normalized coefficients (I - mu) / (sigma + C) with
/// Gaussian-weighted local statistics and clamp-to-edge borders. Single channel only.
ImageBuffer mscn(const ImageBuffer& img, const MscnParams& params = {});

struct GgdFit {
    double shape = 0; // alpha
    double variance = 0;
};

struct AggdFit {
    double shape = 0;
    double mean = 0;
    double left_variance = 0;
    double right_variance = 0;
};

/// Moment-matching fits over a shape grid of 0.2..10 in steps of 0.001.
GgdFit fit_ggd(std::span<const float> samples);
AggdFit fit_aggd(std::span<const float> samples);

/// 18 features from one MSCN field: GGD (shape, variance) followed by AGGD
/// (shape, mean, left var, right var) of the horizontal, vertical and two
/// diagonal neighbour products.
std::vector<double> nss_features(const ImageBuffer& mscn_field);

/// BRISQUE spatial features: nss_features at full and half scale (36 values).
std::vector<double> brisque_features(const ImageBuffer& img);

/// Multivariate Gaussian summary of feature vectors.
struct NiqeModel {
    std::vector<double> mean;
    std::vector<double> covariance; // row-major, dim x dim
    std::size_t dim() const noexcept { return mean.size(); }
};

/// Per-patch 36-dim features (both scales) over non-overlapping patch x patch
/// blocks. Images smaller than one patch yield a single whole-image block.
std::vector<std::vector<double>> niqe_patch_features(const ImageBuffer& img, int patch = 96);

/// Sample mean and (n - 1)-normalized covariance. Throws MetricError if empty.
NiqeModel fit_mvg(std::span<const std::vector<double>> features);

/// sqrt((mu1 - mu2)^T ((S1 + S2) / 2)^+ (mu1 - mu2)); an exact inverse is used
/// when the pooled covariance is invertible, a pseudo-inverse otherwise.
double niqe_distance(const NiqeModel& test, const NiqeModel& pristine);

/// NIQE score of an image against a pristine model.
double niqe_score(const ImageBuffer& img, const NiqeModel& pristine, int patch = 96);

/// Pristine model sidecar: {"mean": [...], "covariance": [[...], ...]}.
NiqeModel load_niqe_model(const std::filesystem::path& path);
void save_niqe_model(const NiqeModel& model, const std::filesystem::path& path);

} // namespace twostage
