// Copyright 2026 The twostage Authors
// SPDX-License-Identifier: Apache-2.0
//

#include "twostage/lora_algebra.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/SVD>
#include <fmt/format.h>

namespace twostage {

namespace {

// Adds sign * alpha * U * V to `target` in place. Each element is accumulated
// in double over k in ascending order, then rounded once.
void apply_update(Matrix& target, const LoraDelta& delta, double sign) {
    const std::size_t d1 = delta.up.rows();
    const std::size_t d2 = delta.down.cols();
    const std::size_t r = delta.rank;
    const double scale = sign * delta.alpha;
    std::vector<double> row(d2);
    for (std::size_t i = 0; i < d1; ++i) {
        std::fill(row.begin(), row.end(), 0.0);
        for (std::size_t k = 0; k < r; ++k) {
            const double u = delta.up(i, k);
            for (std::size_t j = 0; j < d2; ++j) {
                row[j] += u * static_cast<double>(delta.down(k, j));
            }
        }
        for (std::size_t j = 0; j < d2; ++j) {
            target(i, j) = static_cast<float>(static_cast<double>(target(i, j)) + scale * row[j]);
        }
    }
}

void check_base(const Matrix& base, const LoraDelta& delta) {
    check_delta_shape(delta);
    if (base.rows() != delta.up.rows() || base.cols() != delta.down.cols()) {
        throw DimensionError(fmt::format("base '{}' is {}x{}, delta expects {}x{}", delta.base_name, base.rows(),
                                         base.cols(), delta.up.rows(), delta.down.cols()));
    }
}

} // namespace

void check_delta_shape(const LoraDelta& delta) {
    if (delta.rank == 0) {
        throw DimensionError(fmt::format("delta '{}' has rank 0", delta.base_name));
    }
    if (delta.up.cols() != delta.rank || delta.down.rows() != delta.rank) {
        throw DimensionError(fmt::format("delta '{}': U is {}x{}, V is {}x{}, declared rank {}", delta.base_name,
                                         delta.up.rows(), delta.up.cols(), delta.down.rows(), delta.down.cols(),
                                         delta.rank));
    }
}

Matrix materialize(const LoraDelta& delta) {
    check_delta_shape(delta);
    Matrix out(delta.up.rows(), delta.down.cols());
    apply_update(out, delta, 1.0);
    return out;
}

Matrix merge(const Matrix& base, const LoraDelta& delta) {
    check_base(base, delta);
    Matrix out = base;
    apply_update(out, delta, 1.0);
    return out;
}

Matrix unmerge(const Matrix& merged, const LoraDelta& delta) {
    check_base(merged, delta);
    Matrix out = merged;
    apply_update(out, delta, -1.0);
    return out;
}

double frobenius_norm(const Matrix& m) {
    double sum = 0.0;
    for (float v : m.values()) {
        sum += static_cast<double>(v) * static_cast<double>(v);
    }
    return std::sqrt(sum);
}

BoundReport shift_bound(const LoraDelta& delta, double kappa) {
    if (!(kappa >= 0.0)) {
        throw std::invalid_argument("kappa must be non-negative");
    }
    check_delta_shape(delta);

    // ||alpha U V||_F from the update kept in double, so that the comparison
    // against the factor bound is not disturbed by f32 rounding.
    const std::size_t d1 = delta.up.rows();
    const std::size_t d2 = delta.down.cols();
    double sum = 0.0;
    std::vector<double> row(d2);
    for (std::size_t i = 0; i < d1; ++i) {
        std::fill(row.begin(), row.end(), 0.0);
        for (std::size_t k = 0; k < delta.rank; ++k) {
            const double u = delta.up(i, k);
            for (std::size_t j = 0; j < d2; ++j) {
                row[j] += u * static_cast<double>(delta.down(k, j));
            }
        }
        for (double v : row) {
            sum += v * v;
        }
    }

    BoundReport report;
    const double alpha = std::abs(delta.alpha);
    report.delta_frobenius = alpha * std::sqrt(sum);
    report.factor_bound = alpha * frobenius_norm(delta.up) * frobenius_norm(delta.down);
    report.kappa = kappa;
    report.kl_bound = kappa * report.delta_frobenius;
    return report;
}

bool verify_rank(const LoraDelta& delta, double rel_tol) {
    if (delta.rank == 0 || delta.up.cols() != delta.rank || delta.down.rows() != delta.rank) {
        return false;
    }
    const std::size_t d1 = delta.up.rows();
    const std::size_t d2 = delta.down.cols();
    if (delta.rank > std::min(d1, d2)) {
        return false;
    }
    Eigen::MatrixXd dense(static_cast<Eigen::Index>(d1), static_cast<Eigen::Index>(d2));
    for (std::size_t i = 0; i < d1; ++i) {
        for (std::size_t j = 0; j < d2; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < delta.rank; ++k) {
                acc += static_cast<double>(delta.up(i, k)) * delta.down(k, j);
            }
            dense(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = delta.alpha * acc;
        }
    }
    const Eigen::VectorXd sv = Eigen::JacobiSVD<Eigen::MatrixXd>(dense).singularValues();
    if (sv.size() == 0 || sv(0) == 0.0) {
        return true;
    }
    const double cutoff = rel_tol * sv(0);
    for (Eigen::Index i = static_cast<Eigen::Index>(delta.rank); i < sv.size(); ++i) {
        if (sv(i) > cutoff) {
            return false;
        }
    }
    return true;
}

} // namespace twostage
