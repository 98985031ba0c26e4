#include <gtest/gtest.h>

#include <random>

#include "m2r/aiam.hpp"
#include "m2r/error.hpp"
#include "m2r/gradcheck.hpp"
#include "m2r/ops.hpp"
#include "test_util.hpp"

using namespace m2r;
using m2r::testing::max_abs_diff;
using m2r::testing::random_tensor;
using m2r::testing::values_of;

namespace {

struct Levels {
    Tensor low, mid, high;
};

Levels random_levels(std::mt19937_64& rng, std::size_t n = 2, std::size_t s = 8, bool grad = false) {
    return {random_tensor({n, 4, 2 * s, 2 * s}, rng, grad), random_tensor({n, 6, s, s}, rng, grad),
            random_tensor({n, 8, s / 2, s / 2}, rng, grad)};
}

}  // namespace

TEST(Aiam, ZeroInputsGiveZeroOutput) {
    ParameterStore store(1);
    AiamBlock block(store, "a", 3, 4, 6, 8);
    auto low = Tensor::zeros({2, 4, 8, 8});
    auto mid = Tensor::zeros({2, 6, 4, 4});
    auto high = Tensor::zeros({2, 8, 2, 2});
    for (bool training : {true, false}) {
        for (double v : values_of(block.interaction_i1(low, mid, high, training))) EXPECT_EQ(v, 0.0);
        for (double v : values_of(block.interaction_i2(low, mid, high, training))) EXPECT_EQ(v, 0.0);
        for (double v : values_of(block.forward(low, mid, high, training))) EXPECT_EQ(v, 0.0);
    }
}

TEST(Aiam, ShapeContractOnToyEncoderLevels) {
    // Levels 2, 3, 4 of the 16/32/64/96/128 encoder at 64x64.
    std::mt19937_64 rng(2);
    ParameterStore store(3);
    AiamBlock block(store, "a", 3, 32, 64, 96);
    auto low = random_tensor({1, 32, 32, 32}, rng);
    auto mid = random_tensor({1, 64, 16, 16}, rng);
    auto high = random_tensor({1, 96, 8, 8}, rng);
    EXPECT_EQ(block.interaction_i1(low, mid, high, true).shape(), mid.shape());
    EXPECT_EQ(block.interaction_i2(low, mid, high, true).shape(), mid.shape());
    EXPECT_EQ(block.forward(low, mid, high, true).shape(), mid.shape());
}

TEST(Aiam, NonAdjacentLevelsRejected) {
    std::mt19937_64 rng(4);
    ParameterStore store(5);
    AiamBlock block(store, "a", 3, 4, 6, 8);
    auto mid = random_tensor({1, 6, 4, 4}, rng);
    auto high = random_tensor({1, 8, 2, 2}, rng);
    EXPECT_THROW(block.forward(random_tensor({1, 4, 16, 16}, rng), mid, high, true), DimensionError);
    EXPECT_THROW(block.forward(random_tensor({1, 4, 8, 8}, rng), mid, random_tensor({1, 8, 4, 4}, rng), true),
                 DimensionError);
    EXPECT_THROW(block.forward(random_tensor({1, 5, 8, 8}, rng), mid, high, true), DimensionError);
    EXPECT_THROW(downsample2(mid, 3, 3), DimensionError);
    EXPECT_THROW(upsample2(mid, 12, 12), DimensionError);
}

TEST(Aiam, PathsAreDistinct) {
    std::mt19937_64 rng(6);
    ParameterStore store(7);
    AiamBlock block(store, "a", 3, 4, 6, 8);
    auto L = random_levels(rng);
    auto i1 = block.interaction_i1(L.low, L.mid, L.high, true);
    auto i2 = block.interaction_i2(L.low, L.mid, L.high, true);
    EXPECT_GT(max_abs_diff(i1.values(), i2.values()), 1e-3);
}

TEST(Aiam, ForwardEqualsResidualOfPathSum) {
    std::mt19937_64 rng(8);
    ParameterStore store(9);
    AiamBlock block(store, "a", 3, 4, 6, 8);
    auto L = random_levels(rng);
    auto s = add(block.interaction_i1(L.low, L.mid, L.high, false), block.interaction_i2(L.low, L.mid, L.high, false));
    auto expected = block.residual(s, false);
    auto out = block.forward(L.low, L.mid, L.high, false);
    EXPECT_LT(max_abs_diff(out.values(), expected.values()), 1e-12);
}

TEST(Aiam, BothPathsContribute) {
    std::mt19937_64 rng(10);
    auto L = random_levels(rng);
    auto run = [&](AiamOptions o) {
        ParameterStore store(11);
        AiamBlock block(store, "a", 3, 4, 6, 8, o);
        return block.forward(L.low, L.mid, L.high, false);
    };
    auto both = run({true, true});
    ParameterStore store(11);
    AiamBlock block(store, "a", 3, 4, 6, 8);
    auto only_i1 = block.residual(block.interaction_i1(L.low, L.mid, L.high, false), false);
    auto only_i2 = block.residual(block.interaction_i2(L.low, L.mid, L.high, false), false);
    EXPECT_GT(max_abs_diff(both.values(), only_i1.values()), 1e-3);
    EXPECT_GT(max_abs_diff(both.values(), only_i2.values()), 1e-3);
    auto off = run({false, false});
    EXPECT_EQ(max_abs_diff(off.values(), L.mid.values()), 0.0);
}

TEST(Aiam, EveryInputReceivesGradient) {
    std::mt19937_64 rng(12);
    ParameterStore store(13);
    AiamBlock block(store, "a", 3, 4, 6, 8);
    auto L = random_levels(rng, 2, 4, true);
    auto w = random_tensor({2, 6, 4, 4}, rng);
    for (int path = 0; path < 2; ++path) {
        L.low.clear_grad();
        L.mid.clear_grad();
        L.high.clear_grad();
        auto out = path == 0 ? block.interaction_i1(L.low, L.mid, L.high, true)
                             : block.interaction_i2(L.low, L.mid, L.high, true);
        backward(projection_loss(out, w));
        for (const Tensor* t : {&L.low, &L.mid, &L.high}) {
            double norm = 0;
            for (double g : t->grad()) norm += g * g;
            EXPECT_GT(norm, 0.0) << "path " << path;
        }
    }
}

TEST(Aiam, GradientsMatchFiniteDifferences) {
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
        std::mt19937_64 rng(seed);
        ParameterStore store(seed + 50);
        AiamBlock block(store, "a", 3, 4, 6, 8);
        auto L = random_levels(rng, 2, 4, true);
        auto w = random_tensor({2, 6, 4, 4}, rng);
        std::vector<Tensor> inputs{L.low, L.mid, L.high};
        for (const auto& p : store.parameters()) inputs.push_back(p->tensor);
        GradcheckOptions opt;
        opt.max_coordinates = 200;
        opt.seed = seed;
        auto r = check_gradients([&] { return projection_loss(block.forward(L.low, L.mid, L.high, true), w); },
                                 inputs, opt);
        EXPECT_LT(r.max_relative_error, 1e-4) << "seed " << seed;
        EXPECT_GT(r.checked, 100u);
    }
}

TEST(DecoderFuse, ConcatAndStructuredWeights) {
    std::mt19937_64 rng(14);
    const std::size_t C = 3;
    ParameterStore store(15);
    DecoderFuse fuse(store, "d", C, C, C);
    auto a = random_tensor({1, C, 5, 5}, rng);
    EXPECT_EQ(concat({a, a}, 1).dim(1), 2 * C);
    // Identity-like kernel on the first C input channels: centre tap 1.
    auto* w = store.find_parameter("d.conv.weight");
    auto wv = w->tensor.mutable_values();
    for (auto& v : wv) v = 0.0;
    for (std::size_t c = 0; c < C; ++c) wv[((c * 2 * C + c) * 3 + 1) * 3 + 1] = 1.0;
    auto out = fuse(a, Tensor::zeros({1, C, 5, 5}));
    EXPECT_LT(max_abs_diff(out.values(), a.values()), 1e-15);
    EXPECT_THROW(fuse(a, Tensor::zeros({1, C, 4, 4})), DimensionError);
    EXPECT_THROW(fuse(a, Tensor::zeros({1, C + 1, 5, 5})), DimensionError);
}

TEST(DecoderFuse, GradientReachesBothOperands) {
    std::mt19937_64 rng(16);
    ParameterStore store(17);
    DecoderFuse fuse(store, "d", 4, 2, 4);
    auto a = random_tensor({1, 4, 4, 4}, rng, true);
    auto b = random_tensor({1, 2, 4, 4}, rng, true);
    auto w = random_tensor({1, 4, 4, 4}, rng);
    auto r = check_gradients([&] { return projection_loss(fuse(a, b), w); }, {a, b});
    EXPECT_LT(r.max_relative_error, 1e-6);
    for (const Tensor* t : {&a, &b}) {
        backward(projection_loss(fuse(a, b), w));
        double norm = 0;
        for (double g : t->grad()) norm += g * g;
        EXPECT_GT(norm, 0.0);
    }
}
