#include <gtest/gtest.h>

#include <cmath>

#include "m2r/error.hpp"
#include "m2r/gradcheck.hpp"
#include "m2r/nn.hpp"
#include "m2r/ops.hpp"
#include "test_util.hpp"

using namespace m2r;
using m2r::testing::max_abs_diff;
using m2r::testing::random_tensor;

namespace {

// Six nested loops, straight from the definition of cross-correlation.
std::vector<double> naive_conv(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride, std::size_t pad) {
    const auto& xs = x.shape();
    const auto& ws = w.shape();
    const std::size_t C = xs[0], H = xs[1], W = xs[2], O = ws[0], K = ws[2];
    const std::size_t Ho = (H + 2 * pad - K) / stride + 1, Wo = (W + 2 * pad - K) / stride + 1;
    std::vector<double> out(O * Ho * Wo, 0.0);
    for (std::size_t o = 0; o < O; ++o)
        for (std::size_t oy = 0; oy < Ho; ++oy)
            for (std::size_t ox = 0; ox < Wo; ++ox) {
                double acc = b.defined() ? b.values()[o] : 0.0;
                for (std::size_t c = 0; c < C; ++c)
                    for (std::size_t ky = 0; ky < K; ++ky)
                        for (std::size_t kx = 0; kx < K; ++kx) {
                            const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
                            const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
                            if (iy < 0 || ix < 0 || iy >= static_cast<long>(H) || ix >= static_cast<long>(W)) continue;
                            acc += x.values()[(c * H + iy) * W + ix] * w.values()[((o * C + c) * K + ky) * K + kx];
                        }
                out[(o * Ho + oy) * Wo + ox] = acc;
            }
    return out;
}

std::vector<double> naive_matmul(const Tensor& a, const Tensor& b) {
    const std::size_t M = a.dim(0), K = a.dim(1), N = b.dim(1);
    std::vector<double> out(M * N, 0.0);
    for (std::size_t i = 0; i < M; ++i)
        for (std::size_t j = 0; j < N; ++j)
            for (std::size_t k = 0; k < K; ++k) out[i * N + j] += a.values()[i * K + k] * b.values()[k * N + j];
    return out;
}

// Per-pixel bilinear sample with half-pixel centres and edge clamping.
double bilinear_at(const std::vector<double>& img, std::size_t h, std::size_t w, double sy, double sx) {
    sy = std::max(sy, 0.0);
    sx = std::max(sx, 0.0);
    const std::size_t y0 = std::min<std::size_t>(static_cast<std::size_t>(sy), h - 1);
    const std::size_t x0 = std::min<std::size_t>(static_cast<std::size_t>(sx), w - 1);
    const std::size_t y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
    const double fy = sy - y0, fx = sx - x0;
    return img[y0 * w + x0] * (1 - fy) * (1 - fx) + img[y0 * w + x1] * (1 - fy) * fx + img[y1 * w + x0] * fy * (1 - fx) +
           img[y1 * w + x1] * fy * fx;
}

}  // namespace

TEST(Conv2d, IdentityKernelReproducesInput) {
    std::mt19937_64 rng(1);
    auto x = random_tensor({1, 5, 4}, rng);
    auto w = Tensor::from_values({1, 1, 1, 1}, {1.0});
    auto b = Tensor::zeros({1});
    auto y = conv2d(x, w, b, 1, 0);
    EXPECT_EQ(y.shape(), x.shape());
    EXPECT_EQ(max_abs_diff(y.values(), x.values()), 0.0);
}

TEST(Conv2d, AllOnesSumsWindow) {
    auto x = Tensor::full({1, 3, 3}, 1.0);
    auto w = Tensor::full({1, 1, 3, 3}, 1.0);
    auto y = conv2d(x, w, Tensor::zeros({1}), 1, 0);
    ASSERT_EQ(y.shape(), (Shape{1, 1, 1}));
    EXPECT_DOUBLE_EQ(y.item(), 9.0);
}

TEST(Conv2d, MatchesNestedLoopOracle) {
    std::mt19937_64 rng(7);
    auto x = random_tensor({2, 4, 4}, rng);
    auto w = random_tensor({3, 2, 3, 3}, rng);
    auto b = random_tensor({3}, rng);
    auto y = conv2d(x, w, b, 1, 0);
    EXPECT_LT(max_abs_diff(y.values(), naive_conv(x, w, b, 1, 0)), 1e-12);
}

TEST(Conv2d, MatchesOracleAcrossStridesAndPadding) {
    std::mt19937_64 rng(11);
    for (std::size_t c = 1; c <= 4; ++c) {
        for (std::size_t k : {1u, 3u, 5u}) {
            for (std::size_t stride : {1u, 2u}) {
                for (std::size_t pad : {0u, 1u, 2u}) {
                    const std::size_t hw = 8;
                    if (hw + 2 * pad < k || (hw + 2 * pad - k) % stride) continue;
                    auto x = random_tensor({c, hw, hw}, rng);
                    auto w = random_tensor({2, c, k, k}, rng);
                    auto b = random_tensor({2}, rng);
                    auto y = conv2d(x, w, b, stride, pad);
                    EXPECT_LT(max_abs_diff(y.values(), naive_conv(x, w, b, stride, pad)), 1e-12)
                        << "c=" << c << " k=" << k << " stride=" << stride << " pad=" << pad;
                }
            }
        }
    }
}

TEST(Conv2d, BatchedEqualsPerItem) {
    std::mt19937_64 rng(3);
    auto x = random_tensor({2, 3, 6, 6}, rng);
    auto w = random_tensor({4, 3, 3, 3}, rng);
    auto y = conv2d(x, w, Tensor{}, 1, 1);
    for (std::size_t n = 0; n < 2; ++n) {
        std::vector<double> item(x.values().begin() + n * 108, x.values().begin() + (n + 1) * 108);
        auto single = conv2d(Tensor::from_values({3, 6, 6}, item), w, Tensor{}, 1, 1);
        std::span<const double> part(y.values().data() + n * 144, 144);
        EXPECT_LT(max_abs_diff(part, single.values()), 1e-12);
    }
}

TEST(Conv2d, ShapeErrors) {
    auto x = Tensor::zeros({2, 4, 4});
    EXPECT_THROW(conv2d(x, Tensor::zeros({1, 3, 3, 3}), Tensor{}, 1, 1), DimensionError);
    EXPECT_THROW(conv2d(x, Tensor::zeros({1, 2, 2, 2}), Tensor{}, 1, 0), DimensionError);
    EXPECT_THROW(conv2d(x, Tensor::zeros({1, 2, 3, 3}), Tensor::zeros({2}), 1, 1), DimensionError);
    EXPECT_THROW(conv2d(Tensor::zeros({2, 6, 6}), Tensor::zeros({1, 2, 3, 3}), Tensor{}, 2, 0), DimensionError);
}

TEST(Matmul, IdentityAndHandSum) {
    auto eye = Tensor::from_values({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    std::mt19937_64 rng(5);
    auto b = random_tensor({3, 4}, rng);
    EXPECT_EQ(max_abs_diff(matmul(eye, b).values(), b.values()), 0.0);

    auto a = Tensor::from_values({2, 2}, {1, 2, 3, 4});
    auto ones = Tensor::from_values({2, 1}, {1, 1});
    auto c = matmul(a, ones);
    EXPECT_EQ(c.shape(), (Shape{2, 1}));
    EXPECT_DOUBLE_EQ(c.values()[0], 3.0);
    EXPECT_DOUBLE_EQ(c.values()[1], 7.0);
}

TEST(Matmul, MatchesTripleLoopOracle) {
    std::mt19937_64 rng(9);
    auto a = random_tensor({5, 7}, rng);
    auto b = random_tensor({7, 3}, rng);
    EXPECT_LT(max_abs_diff(matmul(a, b).values(), naive_matmul(a, b)), 1e-12);
}

TEST(Matmul, GradientsAreOuterProducts) {
    std::mt19937_64 rng(2);
    auto a = random_tensor({2, 3}, rng, true);
    auto b = random_tensor({3, 2}, rng, true);
    auto dc = random_tensor({2, 2}, rng);
    backward(projection_loss(matmul(a, b), dc));
    // dA = dC B^T, dB = A^T dC
    NoGradGuard g;
    auto expect_a = matmul(dc, transpose(b.detach(), 0, 1));
    auto expect_b = matmul(transpose(a.detach(), 0, 1), dc);
    EXPECT_LT(max_abs_diff(a.grad(), expect_a.values()), 1e-14);
    EXPECT_LT(max_abs_diff(b.grad(), expect_b.values()), 1e-14);
}

TEST(Matmul, InnerDimensionMismatchThrows) {
    EXPECT_THROW(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), DimensionError);
    EXPECT_THROW(matmul(Tensor::zeros({2, 2, 3}), Tensor::zeros({2, 2, 3})), DimensionError);
}

TEST(Activations, SoftmaxSigmoidRelu) {
    auto s = softmax(Tensor::from_values({2}, {0, 0}), 0);
    EXPECT_DOUBLE_EQ(s.values()[0], 0.5);
    EXPECT_DOUBLE_EQ(s.values()[1], 0.5);
    EXPECT_DOUBLE_EQ(sigmoid(Tensor::scalar(0.0)).item(), 0.5);

    auto x = Tensor::from_values({3}, {-1.0, 0.0, 2.0}, true);
    auto r = relu(x);
    EXPECT_EQ(r.values()[0], 0.0);
    EXPECT_EQ(r.values()[1], 0.0);
    EXPECT_EQ(r.values()[2], 2.0);
    backward(sum(r));
    EXPECT_EQ(x.grad()[0], 0.0);
    EXPECT_EQ(x.grad()[1], 0.0);  // subgradient at 0
    EXPECT_EQ(x.grad()[2], 1.0);
}

TEST(Activations, SoftmaxRowsSumToOne) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        std::mt19937_64 rng(seed);
        auto x = random_tensor({4, 4}, rng, false, -5, 5);
        for (std::ptrdiff_t axis : {-1, 0}) {
            auto y = softmax(x, axis);
            for (std::size_t i = 0; i < 4; ++i) {
                double total = 0.0;
                for (std::size_t j = 0; j < 4; ++j) {
                    const double v = axis == -1 ? y.values()[i * 4 + j] : y.values()[j * 4 + i];
                    EXPECT_GE(v, 0.0);
                    total += v;
                }
                EXPECT_NEAR(total, 1.0, 1e-12);
            }
        }
    }
    EXPECT_THROW(softmax(Tensor::zeros({2, 2}), 2), DimensionError);
    EXPECT_THROW(softmax(Tensor::zeros({2, 2}), -3), DimensionError);
}

TEST(Pooling, ConstantInput) {
    auto x = Tensor::full({3, 4, 5}, 2.5);
    const auto g = global_max_pool(x);
    const auto c = channel_max_pool(x);
    for (double v : g.values()) EXPECT_EQ(v, 2.5);
    for (double v : c.values()) EXPECT_EQ(v, 2.5);
    EXPECT_EQ(global_max_pool(x).shape(), (Shape{3, 1, 1}));
    EXPECT_EQ(channel_max_pool(x).shape(), (Shape{1, 4, 5}));
}

TEST(Pooling, MatchesExhaustiveScan) {
    std::mt19937_64 rng(4);
    auto x = random_tensor({2, 2, 2}, rng);
    auto gmp = global_max_pool(x);
    auto gmpc = channel_max_pool(x);
    const auto v = x.values();
    for (std::size_t c = 0; c < 2; ++c) {
        double best = -1e300;
        for (std::size_t i = 0; i < 4; ++i) best = std::max(best, v[c * 4 + i]);
        EXPECT_EQ(gmp.values()[c], best);
    }
    for (std::size_t p = 0; p < 4; ++p) EXPECT_EQ(gmpc.values()[p], std::max(v[p], v[4 + p]));
}

TEST(Pooling, GradientIsOneHotAtFirstArgmax) {
    auto x = Tensor::from_values({1, 2, 2}, {0.5, 3.0, 3.0, -1.0}, true);
    backward(sum(global_max_pool(x)));
    const std::vector<double> expected{0, 1, 0, 0};
    EXPECT_EQ(std::vector<double>(x.grad().begin(), x.grad().end()), expected);

    auto y = Tensor::from_values({1, 1, 4, 4}, std::vector<double>(16, 1.0), true);
    backward(sum(max_pool2d(y, 2, 2)));
    // Ties resolve to the top-left element of each window.
    for (std::size_t i = 0; i < 16; ++i) {
        const bool top_left = (i / 4) % 2 == 0 && (i % 4) % 2 == 0;
        EXPECT_EQ(y.grad()[i], top_left ? 1.0 : 0.0);
    }
}

TEST(Pooling, EmptyTensorThrows) {
    EXPECT_THROW(global_max_pool(Tensor::zeros({0, 2, 2})), DimensionError);
    EXPECT_THROW(channel_max_pool(Tensor::zeros({2, 0, 2})), DimensionError);
}

TEST(Resample, SameSizeIsIdentity) {
    std::mt19937_64 rng(8);
    auto x = random_tensor({2, 5, 3}, rng);
    for (auto mode : {ResampleMode::nearest, ResampleMode::bilinear}) {
        EXPECT_EQ(max_abs_diff(resample(x, 5, 3, mode).values(), x.values()), 0.0);
    }
}

TEST(Resample, UnitUpsample) {
    auto x = Tensor::from_values({1, 1, 1}, {0.7});
    for (auto mode : {ResampleMode::nearest, ResampleMode::bilinear}) {
        auto y = resample(x, 2, 2, mode);
        ASSERT_EQ(y.shape(), (Shape{1, 2, 2}));
        for (double v : y.values()) EXPECT_EQ(v, 0.7);
    }
}

TEST(Resample, BilinearRampMatchesHandInterpolation) {
    std::vector<double> ramp(9);
    for (std::size_t i = 0; i < 9; ++i) ramp[i] = static_cast<double>(i);  // v = 3y + x
    auto y = resample(Tensor::from_values({1, 3, 3}, ramp), 6, 6, ResampleMode::bilinear);
    for (std::size_t oy = 0; oy < 6; ++oy) {
        for (std::size_t ox = 0; ox < 6; ++ox) {
            const double expect = bilinear_at(ramp, 3, 3, (oy + 0.5) * 0.5 - 0.5, (ox + 0.5) * 0.5 - 0.5);
            EXPECT_NEAR(y.values()[oy * 6 + ox], expect, 1e-12);
        }
    }
    // Along one axis the half-pixel taps land at 0, .25, .75, 1.25, 1.75, 2 (clamped).
    const double along_x[] = {0.0, 0.25, 0.75, 1.25, 1.75, 2.0};
    for (std::size_t ox = 0; ox < 6; ++ox) EXPECT_NEAR(y.values()[ox], along_x[ox], 1e-12);
}

TEST(Broadcast, ChannelAndSpatialOperands) {
    std::mt19937_64 rng(6);
    auto x = random_tensor({3, 2, 2}, rng);
    auto gc = random_tensor({3, 1, 1}, rng);
    auto gs = random_tensor({1, 2, 2}, rng);
    auto y = mul(mul(x, gc), gs);
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t p = 0; p < 4; ++p)
            EXPECT_DOUBLE_EQ(y.values()[c * 4 + p], x.values()[c * 4 + p] * gc.values()[c] * gs.values()[p]);
    EXPECT_THROW(add(Tensor::zeros({3, 2, 2}), Tensor::zeros({2, 1, 1})), DimensionError);
    EXPECT_EQ(concat({x, x}, 0).shape(), (Shape{6, 2, 2}));
}

TEST(BatchNorm, ConstantInputGivesZero) {
    std::vector<double> rm(2, 0.0), rv(2, 1.0);
    auto x = Tensor::full({3, 2, 2, 2}, 4.0);
    auto y = batch_norm(x, Tensor::full({2}, 1.0), Tensor::zeros({2}), {rm, rv}, true);
    for (double v : y.values()) EXPECT_EQ(v, 0.0);
}

TEST(BatchNorm, TrainingNormalizesPerChannel) {
    std::mt19937_64 rng(12);
    auto x = random_tensor({4, 3, 5, 5}, rng, false, -3, 7);
    std::vector<double> rm(3, 0.0), rv(3, 1.0);
    auto y = batch_norm(x, Tensor::full({3}, 1.0), Tensor::zeros({3}), {rm, rv}, true);
    for (std::size_t c = 0; c < 3; ++c) {
        double m = 0, v = 0;
        for (std::size_t n = 0; n < 4; ++n)
            for (std::size_t i = 0; i < 25; ++i) m += y.values()[(n * 3 + c) * 25 + i];
        m /= 100;
        for (std::size_t n = 0; n < 4; ++n)
            for (std::size_t i = 0; i < 25; ++i) v += std::pow(y.values()[(n * 3 + c) * 25 + i] - m, 2);
        v /= 100;
        EXPECT_NEAR(m, 0.0, 1e-6);
        EXPECT_NEAR(v, 1.0, 1e-4);
        EXPECT_NE(rm[c], 0.0);  // running stats moved
    }
}

TEST(BatchNorm, EvalUsesRunningStatistics) {
    std::vector<double> rm{1.0}, rv{4.0};
    auto x = Tensor::from_values({1, 1, 1, 2}, {3.0, -1.0});
    auto y = batch_norm(x, Tensor::full({1}, 2.0), Tensor::full({1}, 0.5), {rm, rv}, false, 0.1, 0.0);
    EXPECT_DOUBLE_EQ(y.values()[0], 2.0 * (3.0 - 1.0) / 2.0 + 0.5);
    EXPECT_DOUBLE_EQ(y.values()[1], 2.0 * (-1.0 - 1.0) / 2.0 + 0.5);
    EXPECT_EQ(rm[0], 1.0);
}

TEST(BatchNorm, ChannelMismatchThrows) {
    std::vector<double> rm(2), rv(2);
    EXPECT_THROW(batch_norm(Tensor::zeros({1, 3, 2, 2}), Tensor::zeros({2}), Tensor::zeros({2}), {rm, rv}, true),
                 DimensionError);
}

TEST(Backward, ScalarIdentityAndFanOut) {
    auto x = Tensor::scalar(3.0, true);
    backward(x);
    EXPECT_EQ(x.grad()[0], 1.0);

    auto y = Tensor::scalar(3.0, true);
    backward(add(y, y));
    EXPECT_EQ(y.grad()[0], 2.0);
}

TEST(Backward, DiamondAccumulatesAdditively) {
    std::mt19937_64 rng(13);
    auto x = random_tensor({4}, rng, true);
    auto f = [](const Tensor& t) { return sum(mul(t, t)); };
    auto g = [](const Tensor& t) { return sum(sigmoid(t)); };
    backward(f(x));
    std::vector<double> gf(x.grad().begin(), x.grad().end());
    x.clear_grad();
    backward(g(x));
    std::vector<double> gg(x.grad().begin(), x.grad().end());
    x.clear_grad();
    backward(add(f(x), g(x)));
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(x.grad()[i], gf[i] + gg[i], 1e-15);
}

TEST(Backward, ReachableLeavesGetGradients) {
    auto a = Tensor::scalar(1.0, true);
    auto unused_path = Tensor::from_values({2}, {1.0, -1.0}, true);
    auto loss = add(a, scale(sum(relu(unused_path)), 0.0));
    backward(loss);
    EXPECT_TRUE(unused_path.has_grad());
}

TEST(Backward, NonScalarLossThrows) {
    auto x = Tensor::zeros({2}, true);
    EXPECT_THROW(backward(x), ContractError);
    EXPECT_THROW(backward(Tensor::scalar(1.0)), ContractError);
}

TEST(Sgd, VanillaStepAndIdleMomentum) {
    ParameterStore store(0);
    auto* p = store.add_constant("w", {2}, 1.0);
    p->tensor.mutable_grad()[0] = 0.5;
    p->tensor.mutable_grad()[1] = -2.0;
    sgd_step(store.parameters(), {0.1, 0.0, 0.0});
    EXPECT_DOUBLE_EQ(p->tensor.values()[0], 1.0 - 0.1 * 0.5);
    EXPECT_DOUBLE_EQ(p->tensor.values()[1], 1.0 + 0.1 * 2.0);
    EXPECT_FALSE(p->tensor.has_grad());

    p->tensor.zero_grad();
    const std::vector<double> before(p->tensor.values().begin(), p->tensor.values().end());
    p->momentum.assign(2, 0.0);
    sgd_step(store.parameters(), {0.1, 0.9, 0.0});
    EXPECT_EQ(std::vector<double>(p->tensor.values().begin(), p->tensor.values().end()), before);
}

TEST(Sgd, TwoMomentumStepsMatchRecursion) {
    ParameterStore store(0);
    auto* p = store.add_constant("w", {1}, 2.0);
    const double lr = 0.1, mom = 0.9, wd = 0.01, g = 0.3;
    // v1 = g + wd*w0; w1 = w0 - lr v1; v2 = mom v1 + g + wd*w1; w2 = w1 - lr v2
    const double w0 = 2.0;
    const double v1 = g + wd * w0;
    const double w1 = w0 - lr * v1;
    const double v2 = mom * v1 + g + wd * w1;
    const double w2 = w1 - lr * v2;
    for (int step = 0; step < 2; ++step) {
        p->tensor.mutable_grad()[0] = g;
        sgd_step(store.parameters(), {lr, mom, wd});
    }
    EXPECT_NEAR(p->tensor.values()[0], w2, 1e-15);
    EXPECT_NEAR(p->momentum[0], v2, 1e-15);
}

TEST(Sgd, MissingGradientNamesParameter) {
    ParameterStore store(0);
    store.add_constant("decoder.head.weight", {1}, 1.0);
    try {
        sgd_step(store.parameters(), {});
        FAIL();
    } catch (const ContractError& e) {
        EXPECT_NE(std::string(e.what()).find("decoder.head.weight"), std::string::npos);
    }
}

TEST(ParameterInit, SeededAndBounded) {
    ParameterStore a(42), b(42);
    Conv2d ca(a, "c", 4, 8, 3);
    Conv2d cb(b, "c", 4, 8, 3);
    const double bound = std::sqrt(6.0 / 36.0);
    for (std::size_t i = 0; i < ca.weight()->tensor.numel(); ++i) {
        EXPECT_EQ(ca.weight()->tensor.values()[i], cb.weight()->tensor.values()[i]);
        EXPECT_LE(std::abs(ca.weight()->tensor.values()[i]), bound);
    }
    for (double v : ca.bias()->tensor.values()) EXPECT_EQ(v, 0.0);
    EXPECT_EQ(ca.weight()->momentum.size(), ca.weight()->tensor.numel());
}
