#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "m2r/error.hpp"
#include "m2r/gradcheck.hpp"
#include "m2r/losses.hpp"
#include "m2r/ops.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace m2r;
using m2r::testing::random_tensor;
using m2r::testing::values_of;

namespace {

SaliencyPair pair_of(Shape s, std::vector<double> p, std::vector<double> g, bool grad = false) {
    return {Tensor::from_values(s, std::move(p), grad), Tensor::from_values(std::move(s), std::move(g))};
}

}  // namespace

TEST(Bce, SinglePixelHalf) {
    auto pair = pair_of({1, 1}, {0.5}, {1.0});
    EXPECT_NEAR(bce_loss(pair).item(), std::log(2.0), 1e-15);
    EXPECT_NEAR(bce_loss(pair, BceReduction::mean).item(), std::log(2.0), 1e-15);
}

TEST(Bce, PerfectBinaryNearZero) {
    const double eps = 1e-8;
    auto pair = pair_of({2, 2}, {eps, 1 - eps, 1 - eps, eps}, {0, 1, 1, 0});
    EXPECT_LT(bce_loss(pair).item(), 4 * 2 * eps);
}

TEST(Bce, MatchesSummationOracle) {
    std::mt19937_64 rng(1);
    auto p = m2r::testing::random_values(16, rng, 0.01, 0.99);
    auto g = m2r::testing::random_values(16, rng, 0.0, 1.0);
    auto pair = pair_of({4, 4}, p, g);
    EXPECT_NEAR(bce_loss(pair).item(), oracle::bce_sum(p, g, 1e-8), 1e-12);
    EXPECT_NEAR(bce_loss(pair, BceReduction::mean).item(), oracle::bce_sum(p, g, 1e-8) / 16, 1e-12);
    EXPECT_THROW(bce_loss({pair.pred, Tensor::zeros({4, 3})}), DimensionError);
}

TEST(Jhol, PerfectBinaryMatch) {
    auto pair = pair_of({2, 3}, {1, 0, 0, 1, 1, 0}, {1, 0, 0, 1, 1, 0});
    auto t = jhol_terms(pair);
    EXPECT_EQ(t.l1.item(), 0.0);
    EXPECT_EQ(t.l2.item(), 0.0);
    EXPECT_EQ(t.l3.item(), 0.0);
    EXPECT_EQ(t.l4.item(), 0.5);
    EXPECT_FALSE(t.degenerate);
}

TEST(Jhol, TwoPixelHandEvaluation) {
    auto t = jhol_terms(pair_of({1, 2}, {1, 0}, {1, 1}));
    EXPECT_EQ(t.l1.item(), 0.0);
    EXPECT_EQ(t.l2.item(), 0.5);
    EXPECT_EQ(t.l3.item(), 0.5);
    EXPECT_EQ(t.l4.item(), 0.0);
}

TEST(Jhol, EmptyGroundTruthFlagged) {
    auto t = jhol_terms(pair_of({1, 2}, {0.2, 0.4}, {0, 0}));
    EXPECT_TRUE(t.degenerate);
    EXPECT_EQ(t.l2.item(), 0.0);
}

TEST(Jhol, SoftMapsBoundedAndOracle) {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 50; ++trial) {
        auto p = m2r::testing::random_values(25, rng, 0.0, 1.0);
        auto g = m2r::testing::random_values(25, rng, 0.0, 1.0);
        auto t = jhol_terms(pair_of({5, 5}, p, g));
        auto o = oracle::jhol(p, g, 1e-8);
        const double got[4] = {t.l1.item(), t.l2.item(), t.l3.item(), t.l4.item()};
        const double want[4] = {o.l1, o.l2, o.l3, o.l4};
        for (int k = 0; k < 4; ++k) {
            EXPECT_GE(got[k], 0.0);
            EXPECT_LE(got[k], 1.0);
            EXPECT_NEAR(got[k], want[k], 1e-12);
        }
    }
}

TEST(Jhol, L3IsSymmetric) {
    std::mt19937_64 rng(3);
    auto p = m2r::testing::random_values(12, rng, 0.0, 1.0);
    auto g = m2r::testing::random_values(12, rng, 0.0, 1.0);
    EXPECT_NEAR(jhol_terms(pair_of({3, 4}, p, g)).l3.item(), jhol_terms(pair_of({3, 4}, g, p)).l3.item(), 1e-15);
}

TEST(Jhol, L1GrowsWithFalsePositiveMass) {
    // Fixed total prediction mass 1.0 moved progressively onto background.
    double previous = -1;
    for (int k = 0; k <= 10; ++k) {
        const double bg = 0.1 * k;
        auto t = jhol_terms(pair_of({1, 2}, {1.0 - bg, bg}, {1, 0}));
        EXPECT_GE(t.l1.item(), previous);
        previous = t.l1.item();
    }
}

TEST(Jhol, BatchedEqualsMeanOfItems) {
    std::mt19937_64 rng(4);
    auto p = m2r::testing::random_values(18, rng, 0.0, 1.0);
    auto g = m2r::testing::random_values(18, rng, 0.0, 1.0);
    auto batched = jhol_terms(pair_of({2, 1, 3, 3}, p, g));
    auto a = oracle::jhol({p.begin(), p.begin() + 9}, {g.begin(), g.begin() + 9}, 1e-8);
    auto b = oracle::jhol({p.begin() + 9, p.end()}, {g.begin() + 9, g.end()}, 1e-8);
    EXPECT_NEAR(batched.l1.item(), (a.l1 + b.l1) / 2, 1e-14);
    EXPECT_NEAR(batched.l4.item(), (a.l4 + b.l4) / 2, 1e-14);
}

TEST(TotalLoss, SinglePixelComposition) {
    LossConfig cfg;
    cfg.bce_reduction = BceReduction::sum;
    EXPECT_NEAR(total_loss(pair_of({1, 1}, {0.5}, {1.0}), {}, cfg).item(), std::log(2.0) + 1.0, 1e-12);
}

TEST(TotalLoss, MuZeroIsBceBitForBit) {
    std::mt19937_64 rng(5);
    auto pair = pair_of({4, 4}, m2r::testing::random_values(16, rng, 0.01, 0.99),
                        m2r::testing::random_values(16, rng, 0.0, 1.0));
    LossConfig cfg;
    cfg.mu = 0;
    EXPECT_EQ(total_loss(pair, {}, cfg).item(), bce_loss(pair, cfg.bce_reduction, cfg.eps).item());
}

TEST(TotalLoss, LambdaMasksSelectSingleTerms) {
    std::mt19937_64 rng(6);
    auto pair = pair_of({4, 4}, m2r::testing::random_values(16, rng, 0.01, 0.99),
                        m2r::testing::random_values(16, rng, 0.0, 1.0));
    const auto t = jhol_terms(pair);
    const double terms[4] = {t.l1.item(), t.l2.item(), t.l3.item(), t.l4.item()};
    const double bce = bce_loss(pair, BceReduction::mean).item();
    for (int k = 0; k < 4; ++k) {
        LossConfig cfg;
        cfg.lambda1 = k == 0;
        cfg.lambda2 = k == 1;
        cfg.lambda3 = k == 2;
        cfg.lambda4 = k == 3;
        EXPECT_NEAR(total_loss(pair, {}, cfg).item(), bce + terms[k], 1e-14);
    }
    LossConfig comp;
    comp.lambda1 = comp.lambda2 = comp.lambda3 = 0;
    comp.l4_complement = true;
    EXPECT_NEAR(total_loss(pair, {}, comp).item(), bce + 1 - terms[3], 1e-14);
}

TEST(TotalLoss, SideOutputsAdd) {
    auto a = pair_of({1, 1}, {0.5}, {1.0});
    auto b = pair_of({1, 1}, {0.25}, {0.0});
    LossConfig cfg;
    const double single_a = total_loss(a, {}, cfg).item();
    const double single_b = total_loss(b, {}, cfg).item();
    EXPECT_NEAR(total_loss(a, {b}, cfg).item(), single_a + single_b, 1e-14);
}

TEST(TotalLoss, InvalidConfig) {
    LossConfig cfg;
    cfg.lambda2 = -1;
    EXPECT_THROW(total_loss(pair_of({1, 1}, {0.5}, {1.0}), {}, cfg), ConfigError);
}

TEST(Losses, GradientsMatchFiniteDifferences) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        std::mt19937_64 rng(seed);
        auto p = random_tensor({2, 1, 3, 3}, rng, true, 0.05, 0.95);
        auto g = random_tensor({2, 1, 3, 3}, rng, false, 0.0, 1.0);
        const SaliencyPair pair{p, g};
        auto terms = [&](int k) {
            return [&, k] {
                auto t = jhol_terms(pair);
                const Tensor* all[4] = {&t.l1, &t.l2, &t.l3, &t.l4};
                return *all[k];
            };
        };
        for (int k = 0; k < 4; ++k) {
            auto r = check_gradients(terms(k), {p});
            EXPECT_LT(r.max_relative_error, 1e-4) << "L" << k + 1 << " seed " << seed;
        }
        auto r = check_gradients([&] { return total_loss(pair, {}, LossConfig{}); }, {p});
        EXPECT_LT(r.max_relative_error, 1e-4) << "total seed " << seed;
    }
}
