#include "m2r/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "m2r/error.hpp"
#include "m2r/ops.hpp"

namespace m2r {

namespace {

struct Probe {
    double value;
    std::uint64_t signature;
};

Probe evaluate(const std::function<Tensor()>& loss_fn) {
    NoGradGuard no_grad;
    KinkProbe probe;
    const double v = loss_fn().item();
    return {v, probe.signature()};
}

}  // namespace

GradcheckResult check_gradients(const std::function<Tensor()>& loss_fn, const std::vector<Tensor>& inputs,
                                const GradcheckOptions& options) {
    for (const auto& t : inputs) {
        if (!t.requires_grad()) throw ContractError("check_gradients: every input must require a gradient");
    }
    std::vector<Tensor> leaves = inputs;
    for (auto& t : leaves) t.clear_grad();

    std::uint64_t base_signature = 0;
    {
        KinkProbe probe;
        const Tensor loss = loss_fn();
        base_signature = probe.signature();
        backward(loss);
    }

    std::vector<std::pair<std::size_t, std::size_t>> coords;
    for (std::size_t t = 0; t < leaves.size(); ++t) {
        for (std::size_t i = 0; i < leaves[t].numel(); ++i) coords.emplace_back(t, i);
    }
    if (options.max_coordinates && coords.size() > options.max_coordinates) {
        std::mt19937_64 rng(options.seed);
        std::shuffle(coords.begin(), coords.end(), rng);
        coords.resize(options.max_coordinates);
    }

    GradcheckResult result;
    for (auto [t, i] : coords) {
        auto values = leaves[t].mutable_values();
        const double original = values[i];
        auto at = [&](double offset) {
            values[i] = original + offset;
            const Probe p = evaluate(loss_fn);
            values[i] = original;
            return p;
        };
        const double h = options.step;
        const Probe plus = at(h), minus = at(-h);
        bool kink = plus.signature != base_signature || minus.signature != base_signature;
        double numeric = (plus.value - minus.value) / (2.0 * h);
        if (!kink && options.stencil == Stencil::five_point) {
            const Probe plus2 = at(2 * h), minus2 = at(-2 * h);
            kink = plus2.signature != base_signature || minus2.signature != base_signature;
            numeric = (-plus2.value + 8.0 * plus.value - 8.0 * minus.value + minus2.value) / (12.0 * h);
        }
        if (kink) {
            ++result.skipped;
            continue;
        }
        // a leaf that backward() never reached has a zero gradient
        const double analytic = leaves[t].has_grad() ? leaves[t].grad()[i] : 0.0;
        const double denom = std::max({std::abs(analytic), std::abs(numeric), options.denominator_floor});
        const double rel = std::abs(analytic - numeric) / denom;
        if (rel > result.max_relative_error || result.checked == 0) {
            result.max_relative_error = rel;
            result.worst_input = t;
            result.worst_index = i;
            result.worst_analytic = analytic;
            result.worst_numeric = numeric;
        }
        ++result.checked;
    }
    for (auto& t : leaves) t.clear_grad();
    return result;
}

Tensor projection_loss(const Tensor& x, const Tensor& weights) { return sum(mul(x, weights)); }

}  // namespace m2r
