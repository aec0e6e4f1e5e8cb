// Copyright 2026 The twostage Authors
// SPDX-License-Identifier: Apache-2.0
//

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "support.hpp"
#include "twostage/lora_algebra.hpp"

using namespace twostage;
using twostage::testing::Rng;
using twostage::testing::random_floats;

namespace {

LoraDelta random_delta(Rng& rng, std::size_t d1, std::size_t d2, std::size_t r, double alpha) {
    LoraDelta d;
    d.base_name = "w";
    d.up = Matrix(d1, r, random_floats(rng, d1 * r));
    d.down = Matrix(r, d2, random_floats(rng, r * d2));
    d.alpha = alpha;
    d.rank = r;
    return d;
}

} // namespace

TEST(LoraAlgebra, MergeMatchesHandComputedExample) {
    LoraDelta d;
    d.up = Matrix(2, 1, std::vector<float>{1, 2});
    d.down = Matrix(1, 2, std::vector<float>{3, 4});
    d.alpha = 0.5;
    d.rank = 1;
    const Matrix w(2, 2, std::vector<float>{1, 1, 1, 1});
    EXPECT_EQ(merge(w, d), Matrix(2, 2, std::vector<float>{2.5f, 3, 4, 5}));
}

TEST(LoraAlgebra, MergeMatchesOracle) {
    Rng rng(3);
    for (int t = 0; t < 50; ++t) {
        const auto d1 = static_cast<std::size_t>(rng.range(1, 24));
        const auto d2 = static_cast<std::size_t>(rng.range(1, 24));
        const auto r = static_cast<std::size_t>(rng.range(1, 6));
        const LoraDelta d = random_delta(rng, d1, d2, r, rng.uniform(-2, 2));
        const Matrix w(d1, d2, random_floats(rng, d1 * d2));
        const Matrix got = merge(w, d);
        const Matrix want = oracle::dense_merge(w, d.up, d.down, d.alpha);
        for (std::size_t i = 0; i < got.size(); ++i) {
            ASSERT_NEAR(got.values()[i], want.values()[i], 1e-6);
        }
    }
}

TEST(LoraAlgebra, UnmergeInvertsMerge) {
    Rng rng(4);
    const LoraDelta d = random_delta(rng, 10, 7, 3, 0.7);
    const Matrix w(10, 7, random_floats(rng, 70));
    const Matrix back = unmerge(merge(w, d), d);
    for (std::size_t i = 0; i < back.size(); ++i) {
        EXPECT_NEAR(back.values()[i], w.values()[i], 1e-6);
    }
}

TEST(LoraAlgebra, ZeroAlphaIsIdentity) {
    Rng rng(5);
    const LoraDelta d = random_delta(rng, 5, 6, 2, 0.0);
    const Matrix w(5, 6, random_floats(rng, 30));
    EXPECT_EQ(merge(w, d), w);
}

TEST(LoraAlgebra, DimensionChecks) {
    Rng rng(6);
    LoraDelta d = random_delta(rng, 4, 5, 2, 1.0);
    EXPECT_THROW(merge(Matrix(5, 4), d), DimensionError);
    d.down = Matrix(3, 5);
    EXPECT_THROW(check_delta_shape(d), DimensionError);
}

TEST(LoraAlgebra, BoundHoldsAndIsTightForRankOne) {
    Rng rng(7);
    for (int t = 0; t < 100; ++t) {
        const auto r = static_cast<std::size_t>(rng.range(1, 5));
        const LoraDelta d = random_delta(rng, 9, 11, r, rng.uniform(-3, 3));
        const BoundReport b = shift_bound(d);
        EXPECT_LE(b.delta_frobenius, b.factor_bound + 1e-9);
        if (r == 1) EXPECT_NEAR(b.delta_frobenius, b.factor_bound, 1e-9 * std::max(1.0, b.factor_bound));
    }
}

TEST(LoraAlgebra, KlBoundScalesWithKappa) {
    Rng rng(8);
    const LoraDelta d = random_delta(rng, 6, 6, 2, 1.0);
    const BoundReport b = shift_bound(d, 2.5);
    EXPECT_DOUBLE_EQ(b.kl_bound, 2.5 * b.delta_frobenius);
    EXPECT_EQ(shift_bound(d, 0.0).kl_bound, 0.0);
    EXPECT_THROW(shift_bound(d, -1.0), std::invalid_argument);
}

TEST(LoraAlgebra, FrobeniusNorm) {
    EXPECT_DOUBLE_EQ(frobenius_norm(Matrix(1, 2, std::vector<float>{3, 4})), 5.0);
}

TEST(LoraAlgebra, VerifyRank) {
    Rng rng(9);
    EXPECT_TRUE(verify_rank(random_delta(rng, 12, 10, 3, 1.0)));
    // rank field claims 1 but the product has rank 3.
    LoraDelta d = random_delta(rng, 12, 10, 3, 1.0);
    d.rank = 1;
    EXPECT_FALSE(verify_rank(d));
    // Duplicate rows in V collapse the product to rank 1, still within rank 2.
    LoraDelta dup = random_delta(rng, 8, 8, 2, 1.0);
    for (std::size_t j = 0; j < 8; ++j) dup.down(1, j) = dup.down(0, j);
    EXPECT_TRUE(verify_rank(dup));
}
