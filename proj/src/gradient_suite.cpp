#include "m2r/gradient_suite.hpp"

#include <chrono>
#include <functional>
#include <memory>
#include <ostream>
#include <random>

#include "m2r/aiam.hpp"
#include "m2r/gradcheck.hpp"
#include "m2r/losses.hpp"
#include "m2r/ndam.hpp"
#include "m2r/network.hpp"
#include "m2r/nn.hpp"
#include "m2r/ops.hpp"

namespace m2r {

namespace {

struct Case {
    Case(std::function<Tensor()> l, std::vector<Tensor> in) : loss(std::move(l)), inputs(std::move(in)) {}

    std::function<Tensor()> loss;
    std::vector<Tensor> inputs;
    std::size_t max_coordinates = 0;
    std::shared_ptr<void> keep_alive;
};

using Rng = std::mt19937_64;

Tensor leaf(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0, bool grad = true) {
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(numel(shape));
    for (auto& x : v) x = u(rng);
    return Tensor::from_values(shape, std::move(v), grad);
}

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) { return lo + rng() % (hi - lo + 1); }

/// Random projection of y to a scalar.
Tensor project(const Tensor& y, std::uint64_t weight_seed) {
    Rng rng(weight_seed);
    return projection_loss(y, leaf(y.shape(), rng, -1.0, 1.0, false));
}

template <typename F>
Case unary(Rng& rng, F op, double lo = -1.0, double hi = 1.0) {
    Tensor x = leaf({pick(rng, 1, 3), pick(rng, 1, 4), pick(rng, 2, 5)}, rng, lo, hi);
    const auto ws = rng();
    return {[=] { return project(op(x), ws); }, {x}};
}

template <typename F>
Case binary(Rng& rng, F op, double lo_b = -1.0, double hi_b = 1.0) {
    const Shape full{pick(rng, 1, 3), pick(rng, 1, 4), pick(rng, 1, 4)};
    Shape other = full;
    switch (rng() % 3) {
        case 0: break;
        case 1: other[1] = 1; break;
        default: other = {full[2]}; break;
    }
    const bool swap = rng() % 2;
    Tensor a = leaf(swap ? other : full, rng), b = leaf(swap ? full : other, rng, lo_b, hi_b);
    const auto ws = rng();
    return {[=] { return project(op(a, b), ws); }, {a, b}};
}

std::shared_ptr<ParameterStore> new_store(Rng& rng) { return std::make_shared<ParameterStore>(rng()); }

void add_params(Case& c, const ParameterStore& store) {
    for (const auto& p : store.parameters()) c.inputs.push_back(p->tensor);
}

Tensor binary_mask(const Shape& shape, Rng& rng) {
    std::vector<double> v(numel(shape));
    for (auto& x : v) x = (rng() % 3 == 0) ? 1.0 : 0.0;
    v[0] = 1.0;
    v[v.size() - 1] = 0.0;
    return Tensor::from_values(shape, std::move(v));
}

struct NamedCase {
    const char* name;
    std::function<Case(Rng&)> build;
};

const std::vector<NamedCase>& cases() {
    static const std::vector<NamedCase> all = {
        {"add", [](Rng& r) { return binary(r, [](auto a, auto b) { return add(a, b); }); }},
        {"sub", [](Rng& r) { return binary(r, [](auto a, auto b) { return sub(a, b); }); }},
        {"mul", [](Rng& r) { return binary(r, [](auto a, auto b) { return mul(a, b); }); }},
        {"div", [](Rng& r) { return binary(r, [](auto a, auto b) { return div(a, b); }, 0.5, 2.0); }},
        {"scale_shift_rsub_neg",
         [](Rng& r) {
             const double s = r() % 7 * 0.3 - 1.0;
             return unary(r, [s](auto x) { return neg(rsub(0.5, shift(scale(x, s), 0.25))); });
         }},
        {"log", [](Rng& r) { return unary(r, [](auto x) { return log(x); }, 0.2, 2.0); }},
        {"exp", [](Rng& r) { return unary(r, [](auto x) { return exp(x); }); }},
        {"sigmoid", [](Rng& r) { return unary(r, [](auto x) { return sigmoid(x); }, -4.0, 4.0); }},
        {"relu", [](Rng& r) { return unary(r, [](auto x) { return relu(x); }); }},
        {"softmax",
         [](Rng& r) {
             const auto axis = static_cast<std::ptrdiff_t>(r() % 3) - 1;
             return unary(r, [axis](auto x) { return softmax(x, axis); }, -3.0, 3.0);
         }},
        {"clamp", [](Rng& r) { return unary(r, [](auto x) { return clamp(x, -0.5, 0.6); }); }},
        {"clamp_min", [](Rng& r) { return unary(r, [](auto x) { return clamp_min(x, 0.1); }); }},
        {"sum_mean",
         [](Rng& r) { return unary(r, [](auto x) { return add(scale(sum(mul(x, x)), 0.5), mean(exp(x))); }); }},
        {"sum_per_item", [](Rng& r) { return unary(r, [](auto x) { return sum_per_item(mul(x, x)); }); }},
        {"reshape_transpose",
         [](Rng& r) {
             return unary(r, [](auto x) {
                 const Shape s = x.shape();
                 return transpose(reshape(x, {s[0] * s[1], s[2]}), 0, 1);
             });
         }},
        {"concat_unsqueeze",
         [](Rng& r) {
             const std::size_t axis = r() % 3;
             Shape sa{2, 3, 2}, sb = sa;
             sb[axis] = pick(r, 1, 3);
             Tensor a = leaf(sa, r), b = leaf(sb, r);
             const auto ws = r();
             return Case{[=] { return project(unsqueeze0(concat({a, b}, axis)), ws); }, {a, b}};
         }},
        {"matmul",
         [](Rng& r) {
             const bool batched = r() % 2;
             const std::size_t B = pick(r, 1, 3), M = pick(r, 1, 4), K = pick(r, 1, 4), N = pick(r, 1, 4);
             Tensor a = leaf(batched ? Shape{B, M, K} : Shape{M, K}, r);
             Tensor b = leaf(batched ? Shape{B, K, N} : Shape{K, N}, r);
             const auto ws = r();
             return Case{[=] { return project(matmul(a, b), ws); }, {a, b}};
         }},
        {"conv2d",
         [](Rng& r) {
             const std::size_t k = r() % 2 ? 3 : 1, stride = pick(r, 1, 2), pad = k == 3 ? r() % 2 : 0;
             const std::size_t ci = pick(r, 1, 3), co = pick(r, 1, 3);
             auto extent = [&] {
                 const std::size_t e = pick(r, 3, 6);
                 return (e + 2 * pad - k) % stride ? e + 1 : e;
             };
             const std::size_t H = extent(), W = extent();
             Tensor x = leaf({pick(r, 1, 2), ci, H, W}, r);
             Tensor w = leaf({co, ci, k, k}, r), b = leaf({co}, r);
             const auto ws = r();
             return Case{[=] { return project(conv2d(x, w, b, stride, pad), ws); }, {x, w, b}};
         }},
        {"max_pool2d",
         [](Rng& r) {
             Tensor x = leaf({pick(r, 1, 2), pick(r, 1, 3), 2 * pick(r, 1, 3), 2 * pick(r, 1, 3)}, r);
             const auto ws = r();
             return Case{[=] { return project(max_pool2d(x, 2, 2), ws); }, {x}};
         }},
        {"global_and_channel_max_pool",
         [](Rng& r) {
             Tensor x = leaf({pick(r, 1, 2), pick(r, 1, 4), pick(r, 1, 4), pick(r, 1, 4)}, r);
             const auto ws = r(), ws2 = r();
             return Case{[=] { return add(project(global_max_pool(x), ws), project(channel_max_pool(x), ws2)); },
                         {x}};
         }},
        {"resample",
         [](Rng& r) {
             const ResampleMode mode = r() % 2 ? ResampleMode::bilinear : ResampleMode::nearest;
             Tensor x = leaf({pick(r, 1, 2), pick(r, 1, 2), pick(r, 2, 5), pick(r, 2, 5)}, r);
             const std::size_t oh = pick(r, 1, 8), ow = pick(r, 1, 8);
             const auto ws = r();
             return Case{[=] { return project(resample(x, oh, ow, mode), ws); }, {x}};
         }},
        {"batch_norm",
         [](Rng& r) {
             const bool training = r() % 2;
             const std::size_t C = pick(r, 1, 3);
             Tensor x = leaf({pick(r, 2, 3), C, pick(r, 2, 3), pick(r, 2, 3)}, r);
             Tensor gamma = leaf({C}, r, 0.5, 1.5), beta = leaf({C}, r);
             auto stats = std::make_shared<std::pair<std::vector<double>, std::vector<double>>>();
             Rng s(r());
             for (std::size_t c = 0; c < C; ++c) {
                 stats->first.push_back(std::uniform_real_distribution<double>(-0.5, 0.5)(s));
                 stats->second.push_back(std::uniform_real_distribution<double>(0.5, 2.0)(s));
             }
             const auto ws = r();
             Case c{[=] {
                        return project(batch_norm(x, gamma, beta, {stats->first, stats->second}, training), ws);
                    },
                    {x, gamma, beta}};
             c.keep_alive = stats;
             return c;
         }},
        {"ndam_p1",
         [](Rng& r) {
             auto store = new_store(r);
             const std::size_t C = pick(r, 1, 9);
             NdamBlock block(*store, "n", 3, C, {true, false});
             Tensor x = leaf({pick(r, 1, 2), C, pick(r, 2, 4), pick(r, 2, 4)}, r);
             const auto ws = r();
             Case c{[=] { return project(block.attention_p1(x), ws); }, {x}};
             add_params(c, *store);
             c.keep_alive = store;
             return c;
         }},
        {"ndam_p2",
         [](Rng& r) {
             auto store = new_store(r);
             const std::size_t C = pick(r, 1, 9);
             NdamBlock block(*store, "n", 4, C, {false, true});
             Tensor x = leaf({pick(r, 1, 2), C, pick(r, 2, 4), pick(r, 2, 4)}, r);
             const auto ws = r();
             Case c{[=] { return project(block.attention_p2(x), ws); }, {x}};
             add_params(c, *store);
             c.keep_alive = store;
             return c;
         }},
        {"ndam_forward",
         [](Rng& r) {
             auto store = new_store(r);
             const std::size_t C = pick(r, 1, 9);
             NdamBlock block(*store, "n", 5, C, {true, true});
             const Shape s{pick(r, 1, 2), C, pick(r, 2, 4), pick(r, 2, 4)};
             Tensor a = leaf(s, r), b = leaf(s, r);
             const auto ws = r();
             Case c{[=] { return project(block.forward(a, b), ws); }, {a, b}};
             add_params(c, *store);
             c.keep_alive = store;
             return c;
         }},
        {"aiam_forward",
         [](Rng& r) {
             auto store = new_store(r);
             const std::size_t cl = pick(r, 1, 3), cm = pick(r, 1, 3), ch = pick(r, 1, 3), H = 2 * pick(r, 1, 2);
             const AiamOptions opt{r() % 4 != 0, r() % 4 != 1};
             AiamBlock block(*store, "a", 3, cl, cm, ch, opt);
             const std::size_t N = 2;
             Tensor low = leaf({N, cl, 2 * H, 2 * H}, r), mid = leaf({N, cm, H, H}, r),
                    high = leaf({N, ch, H / 2, H / 2}, r);
             const auto ws = r();
             Case c{[=] { return project(block.forward(low, mid, high, true), ws); }, {low, mid, high}};
             add_params(c, *store);
             c.keep_alive = store;
             return c;
         }},
        {"decoder_fuse",
         [](Rng& r) {
             auto store = new_store(r);
             const std::size_t a = pick(r, 1, 3), b = pick(r, 1, 3), o = pick(r, 1, 3), H = pick(r, 2, 4);
             DecoderFuse fuse(*store, "f", a, b, o);
             Tensor x = leaf({1, a, H, H}, r), y = leaf({1, b, H, H}, r);
             const auto ws = r();
             Case c{[=] { return project(fuse(x, y), ws); }, {x, y}};
             add_params(c, *store);
             c.keep_alive = store;
             return c;
         }},
        {"bce",
         [](Rng& r) {
             const Shape s{pick(r, 1, 2), 1, pick(r, 2, 4), pick(r, 2, 4)};
             Tensor logits = leaf(s, r, -3.0, 3.0);
             Tensor gt = binary_mask(s, r);
             const auto red = r() % 2 ? BceReduction::mean : BceReduction::sum;
             return Case{[=] { return bce_loss({sigmoid(logits), gt}, red); }, {logits}};
         }},
        {"jhol",
         [](Rng& r) {
             const Shape s{pick(r, 1, 2), 1, pick(r, 2, 4), pick(r, 2, 4)};
             Tensor logits = leaf(s, r, -3.0, 3.0);
             Tensor gt = binary_mask(s, r);
             Rng wr(r());
             std::uniform_real_distribution<double> u(0.1, 2.0);
             const double w1 = u(wr), w2 = u(wr), w3 = u(wr), w4 = u(wr);
             return Case{[=] {
                             const JholTerms t = jhol_terms({sigmoid(logits), gt});
                             return add(add(scale(t.l1, w1), scale(t.l2, w2)), add(scale(t.l3, w3), scale(t.l4, w4)));
                         },
                         {logits}};
         }},
        {"total_loss",
         [](Rng& r) {
             const Shape s{pick(r, 1, 2), 1, pick(r, 2, 4), pick(r, 2, 4)};
             Tensor a = leaf(s, r, -3.0, 3.0), b = leaf(s, r, -3.0, 3.0);
             Tensor gt = binary_mask(s, r);
             LossConfig cfg;
             cfg.lambda2 = 0.5;
             cfg.mu = 0.7;
             cfg.l4_complement = r() % 2;
             return Case{[=] { return total_loss({sigmoid(a), gt}, {{sigmoid(b), gt}}, cfg); }, {a, b}};
         }},
        {"network_16x16",
         [](Rng& r) {
             NetworkConfig cfg;
             cfg.channels = {4, 6, 8, 8, 16};
             cfg.resolution = 16;
             cfg.decoder_width = 4;
             cfg.deep_supervision = r() % 2;
             auto model = std::make_shared<Model>(cfg, r());
             Tensor rgb = leaf({2, 3, 16, 16}, r, 0.0, 1.0), depth = leaf({2, 1, 16, 16}, r, 0.0, 1.0);
             Tensor gt = binary_mask({2, 1, 16, 16}, r);
             Case c{[=] {
                        const ModelOutput out = model->forward(rgb, depth, true);
                        std::vector<SaliencyPair> sides;
                        for (const auto& s : out.side) sides.push_back({s, gt});
                        return total_loss({out.saliency, gt}, sides, LossConfig{});
                    },
                    {rgb, depth}};
             add_params(c, model->store());
             c.max_coordinates = 12;
             c.keep_alive = model;
             return c;
         }},
    };
    return all;
}

}  // namespace

std::vector<std::string> gradient_check_names() {
    std::vector<std::string> names;
    for (const auto& c : cases()) names.emplace_back(c.name);
    return names;
}

GradientSuiteReport run_gradient_suite(const GradientSuiteOptions& options, std::ostream* progress) {
    const auto start = std::chrono::steady_clock::now();
    GradientSuiteReport report;
    report.passed = true;
    std::uint64_t case_index = 0;
    for (const auto& named : cases()) {
        ++case_index;
        if (!options.filter.empty() && std::string(named.name).find(options.filter) == std::string::npos) continue;
        GradientCheckSummary summary;
        summary.name = named.name;
        for (std::size_t trial = 0; trial < options.trials; ++trial) {
            std::seed_seq seq{static_cast<std::uint32_t>(options.seed), static_cast<std::uint32_t>(options.seed >> 32),
                              static_cast<std::uint32_t>(case_index), static_cast<std::uint32_t>(trial)};
            Rng rng(seq);
            const Case c = named.build(rng);
            GradcheckOptions g;
            g.max_coordinates = c.max_coordinates;
            g.step = options.step;
            g.seed = rng();
            const GradcheckResult r = check_gradients(c.loss, c.inputs, g);
            if (progress && r.max_relative_error >= options.tolerance) {
                *progress << "  " << named.name << " trial " << trial << ": input " << r.worst_input << "["
                          << r.worst_index << "] analytic " << r.worst_analytic << " numeric " << r.worst_numeric
                          << " loss " << c.loss().item() << std::endl;
            }
            summary.max_relative_error = std::max(summary.max_relative_error, r.max_relative_error);
            summary.checked += r.checked;
            summary.skipped += r.skipped;
            ++summary.trials;
        }
        summary.passed = summary.checked > 0 && summary.max_relative_error < options.tolerance;
        report.passed = report.passed && summary.passed;
        report.max_relative_error = std::max(report.max_relative_error, summary.max_relative_error);
        if (progress) {
            *progress << summary.name << ": max_rel_err " << summary.max_relative_error << " over " << summary.trials
                      << " trials (" << summary.checked << " coords, " << summary.skipped << " skipped) "
                      << (summary.passed ? "ok" : "FAIL") << std::endl;
        }
        report.checks.push_back(std::move(summary));
    }
    report.passed = report.passed && !report.checks.empty();
    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

}  // namespace m2r
