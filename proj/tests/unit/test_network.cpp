#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <random>

#include "m2r/error.hpp"
#include "m2r/gradcheck.hpp"
#include "m2r/losses.hpp"
#include "m2r/network.hpp"
#include "m2r/ops.hpp"
#include "test_util.hpp"

using namespace m2r;
using m2r::testing::random_tensor;

namespace {

NetworkConfig small_config(std::size_t resolution = 16) {
    NetworkConfig c;
    c.channels = {4, 6, 8, 8, 16};
    c.resolution = resolution;
    c.decoder_width = 4;
    return c;
}

}  // namespace

TEST(NetworkConfig, Validation) {
    NetworkConfig c;
    EXPECT_NO_THROW(c.validate());
    c.channels = {16, 32, 64, 96};
    EXPECT_THROW(c.validate(), ConfigError);
    c = NetworkConfig{};
    c.resolution = 40;
    EXPECT_THROW(c.validate(), ConfigError);
    EXPECT_THROW(Model(c, 0), ConfigError);
    c.resolution = 320;
    EXPECT_NO_THROW(c.validate());
}

TEST(NetworkConfig, SerializeRoundTrip) {
    NetworkConfig c = small_config();
    c.modules.p2 = false;
    c.deep_supervision = true;
    const NetworkConfig back = NetworkConfig::deserialize(c.serialize());
    EXPECT_EQ(back.serialize(), c.serialize());
    EXPECT_THROW(NetworkConfig::deserialize("resolution=abc"), ConfigError);
    EXPECT_THROW(NetworkConfig::deserialize("colour=1"), ConfigError);
}

TEST(Network, SameSeedSameParameters) {
    Model a(NetworkConfig{}, 7), b(NetworkConfig{}, 7), c(NetworkConfig{}, 8);
    ASSERT_EQ(a.store().parameters().size(), b.store().parameters().size());
    bool differs = false;
    for (std::size_t i = 0; i < a.store().parameters().size(); ++i) {
        const auto va = a.store().parameters()[i]->tensor.values();
        const auto vb = b.store().parameters()[i]->tensor.values();
        const auto vc = c.store().parameters()[i]->tensor.values();
        EXPECT_TRUE(std::equal(va.begin(), va.end(), vb.begin()));
        differs = differs || !std::equal(va.begin(), va.end(), vc.begin());
    }
    EXPECT_TRUE(differs);
    EXPECT_GT(a.parameter_count(), 0u);
}

TEST(Network, ToyConfigForwardContract) {
    Model m(NetworkConfig{}, 0);
    std::mt19937_64 rng(1);
    auto rgb = random_tensor({2, 3, 64, 64}, rng, false, 0, 1);
    auto depth = random_tensor({2, 1, 64, 64}, rng, false, 0, 1);
    auto out = m.forward(rgb, depth, true);
    EXPECT_EQ(out.saliency.shape(), (Shape{2, 1, 64, 64}));
    for (double v : out.saliency.values()) {
        EXPECT_GT(v, 0.0);
        EXPECT_LT(v, 1.0);
    }
    EXPECT_TRUE(out.side.empty());
    auto single = m.forward(random_tensor({3, 64, 64}, rng), random_tensor({1, 64, 64}, rng), false);
    EXPECT_EQ(single.saliency.shape(), (Shape{1, 64, 64}));
    EXPECT_THROW(m.forward(random_tensor({1, 3, 32, 32}, rng), random_tensor({1, 1, 32, 32}, rng), false),
                 DimensionError);
    EXPECT_THROW(m.forward(rgb, random_tensor({2, 3, 64, 64}, rng), false), DimensionError);
}

TEST(Network, EvalForwardIsPure) {
    Model m(small_config(32), 2);
    std::mt19937_64 rng(3);
    auto rgb = random_tensor({2, 3, 32, 32}, rng, false, 0, 1);
    auto depth = random_tensor({2, 1, 32, 32}, rng, false, 0, 1);
    m.forward(rgb, depth, true);  // populate running stats
    auto a = m.forward(rgb, depth, false).saliency;
    auto b = m.forward(rgb, depth, false).saliency;
    EXPECT_TRUE(std::equal(a.values().begin(), a.values().end(), b.values().begin()));
}

TEST(Network, EveryParameterReceivesGradient) {
    for (bool deep : {false, true}) {
        NetworkConfig c = small_config(32);
        c.deep_supervision = deep;
        Model m(c, 4);
        std::mt19937_64 rng(5);
        auto rgb = random_tensor({2, 3, 32, 32}, rng, false, 0, 1);
        auto depth = random_tensor({2, 1, 32, 32}, rng, false, 0, 1);
        auto gt = Tensor::zeros({2, 1, 32, 32});
        for (std::size_t n = 0; n < 2; ++n)
            for (std::size_t y = 8; y < 24; ++y)
                for (std::size_t x = 4; x < 20; ++x) gt.mutable_values()[n * 1024 + y * 32 + x] = 1.0;
        auto out = m.forward(rgb, depth, true);
        std::vector<SaliencyPair> sides;
        for (const auto& s : out.side) sides.push_back({s, gt});
        EXPECT_EQ(out.side.size(), deep ? 4u : 0u);
        backward(total_loss({out.saliency, gt}, sides, LossConfig{}));
        for (const auto& p : m.store().parameters()) {
            ASSERT_TRUE(p->tensor.has_grad()) << p->name;
            double norm = 0;
            for (double g : p->tensor.grad()) norm += g * g;
            EXPECT_GT(norm, 0.0) << p->name;
        }
    }
}

TEST(Network, WiringAuditFullAndBaseline) {
    std::mt19937_64 rng(6);
    auto rgb = random_tensor({1, 3, 16, 16}, rng, false, 0, 1);
    auto depth = random_tensor({1, 1, 16, 16}, rng, false, 0, 1);
    {
        Model m(small_config(), 0);
        WiringTrace trace;
        m.forward(rgb, depth, false, &trace);
        EXPECT_EQ(verify_wiring(trace, m.config().modules), "");
        const auto audit = m.audit();
        EXPECT_EQ(audit.ndam_levels, (std::vector<std::size_t>{3, 4, 5}));
        EXPECT_EQ(audit.aiam_levels, (std::vector<std::size_t>{2, 3, 4}));
    }
    {
        NetworkConfig c = small_config();
        c.modules = {false, false, false, false};
        Model m(c, 0);
        WiringTrace trace;
        m.forward(rgb, depth, false, &trace);
        EXPECT_EQ(verify_wiring(trace, c.modules), "");
        EXPECT_TRUE(m.audit().ndam_levels.empty());
        EXPECT_TRUE(m.audit().aiam_levels.empty());
        EXPECT_LT(m.parameter_count(), Model(small_config(), 0).parameter_count());
    }
    WiringTrace bogus;
    bogus.entries.push_back({"ndam", 2, {"f_rgb2", "f_d2"}});
    EXPECT_NE(verify_wiring(bogus, ModuleFlags{}), "");
}

TEST(Network, EveryModuleFlagChangesAudit) {
    const std::string full = Model(small_config(), 0).audit().report();
    for (int k = 0; k < 4; ++k) {
        NetworkConfig c = small_config();
        bool* flags[4] = {&c.modules.p1, &c.modules.p2, &c.modules.i1, &c.modules.i2};
        *flags[k] = false;
        EXPECT_NE(Model(c, 0).audit().report(), full) << k;
    }
}

TEST(Network, PredictQuantizes) {
    Model m(small_config(16), 9);
    std::mt19937_64 rng(10);
    auto rgb = random_tensor({3, 16, 16}, rng, false, 0, 1);
    auto depth = random_tensor({1, 16, 16}, rng, false, 0, 1);
    const auto q = m.predict(rgb, depth);
    const auto f = m.forward(rgb, depth, false).saliency;
    ASSERT_EQ(q.values.size(), f.numel());
    for (std::size_t i = 0; i < q.values.size(); ++i) EXPECT_LE(std::abs(q.values[i] / 255.0 - f.values()[i]), 0.5 / 255.0 + 1e-12);
    const auto q2 = m.predict(rgb, depth);
    EXPECT_EQ(q.values, q2.values);
    auto big = m.predict(random_tensor({3, 40, 24}, rng, false, 0, 1), random_tensor({1, 40, 24}, rng, false, 0, 1));
    EXPECT_EQ(big.height, 40u);
    EXPECT_EQ(big.width, 24u);
    EXPECT_THROW(m.predict(random_tensor({1, 16, 16}, rng), depth), CodecError);
}

TEST(Network, GradientsMatchFiniteDifferences) {
    Model m(small_config(16), 11);
    std::mt19937_64 rng(12);
    auto rgb = random_tensor({2, 3, 16, 16}, rng, true, 0, 1);
    auto depth = random_tensor({2, 1, 16, 16}, rng, true, 0, 1);
    auto gt = random_tensor({2, 1, 16, 16}, rng, false, 0, 1);
    std::vector<Tensor> inputs{rgb, depth};
    for (const auto& p : m.store().parameters()) inputs.push_back(p->tensor);
    GradcheckOptions opt;
    opt.max_coordinates = 150;
    opt.seed = 3;
    auto r = check_gradients([&] { return total_loss({m.forward(rgb, depth, true).saliency, gt}, {}, LossConfig{}); },
                             inputs, opt);
    EXPECT_LT(r.max_relative_error, 1e-4);
    EXPECT_GT(r.checked, 100u);
}
