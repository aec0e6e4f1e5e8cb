// Copyright 2026 The twostage Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <stdexcept>

#include "twostage/matrix.hpp"
#include "twostage/tensor_store.hpp"

namespace twostage {

class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Norms behind the low-rank distributional-shift bound
///   KL(p_adapted || p_base) <= kappa * ||dW||_F <= kappa * alpha * ||U||_F * ||V||_F.
struct BoundReport {
    double delta_frobenius = 0.0; // ||alpha * U V||_F, from the materialized update
    double factor_bound = 0.0;    // |alpha| * ||U||_F * ||V||_F
    double kappa = 1.0;           // caller-supplied Lipschitz constant
    double kl_bound = 0.0;        // kappa * delta_frobenius
};

/// Checks r >= 1, U is d1 x r and V is r x d2. Throws DimensionError.
void check_delta_shape(const LoraDelta& delta);

/// alpha * U * V as a dense d1 x d2 matrix (f64 accumulation).
Matrix materialize(const LoraDelta& delta);

/// W + alpha * U * V. W is left untouched; throws DimensionError if W is not d1 x d2.
Matrix merge(const Matrix& base, const LoraDelta& delta);

/// W_merged - alpha * U * V.
Matrix unmerge(const Matrix& merged, const LoraDelta& delta);

/// Frobenius norm accumulated in double.
double frobenius_norm(const Matrix& m);

/// Throws std::invalid_argument for negative kappa.
BoundReport shift_bound(const LoraDelta& delta, double kappa = 1.0);

/// True iff rank <= min(d1, d2) and the materialized update has no singular
/// value beyond index `rank` above `rel_tol * sigma_max`.
bool verify_rank(const LoraDelta& delta, double rel_tol = 1e-6);

} // namespace twostage
