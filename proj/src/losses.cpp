#include "m2r/losses.hpp"

#include <cmath>

#include "m2r/error.hpp"
#include "m2r/ops.hpp"

namespace m2r {

namespace {

void check_pair(const SaliencyPair& pair, const char* op) {
    if (!pair.pred.defined() || !pair.gt.defined()) throw ContractError(std::string(op) + ": undefined map");
    if (pair.pred.shape() != pair.gt.shape()) {
        throw DimensionError(std::string(op) + ": pred " + to_string(pair.pred.shape()) + " vs gt " +
                             to_string(pair.gt.shape()));
    }
    if (pair.pred.numel() == 0) throw DimensionError(std::string(op) + ": empty map");
}

// [N] per-item sums for batched maps, [1] otherwise.
Tensor item_sums(const Tensor& x) {
    if (x.rank() == 4) return sum_per_item(x);
    return sum_per_item(reshape(x, {1, x.numel()}));
}

std::size_t pixels_per_item(const Tensor& x) { return x.rank() == 4 ? x.numel() / x.dim(0) : x.numel(); }

struct Ratio {
    Tensor value;
    bool degenerate;
};

Ratio guarded_ratio(const Tensor& numerator, const Tensor& denominator, double eps) {
    bool degenerate = false;
    for (double d : denominator.values()) degenerate = degenerate || d < eps;
    return {mean(div(numerator, clamp_min(denominator, eps))), degenerate};
}

}  // namespace

void LossConfig::validate() const {
    if (lambda1 < 0 || lambda2 < 0 || lambda3 < 0 || lambda4 < 0 || mu < 0) {
        throw ConfigError("loss weights must be nonnegative");
    }
    if (!(eps > 0)) throw ConfigError("loss eps must be positive");
}

Tensor bce_loss(const SaliencyPair& pair, BceReduction reduction, double eps) {
    check_pair(pair, "bce_loss");
    const Tensor& g = pair.gt;
    const Tensor p = clamp(pair.pred, eps, 1.0 - eps);
    const Tensor per_pixel = neg(add(mul(g, log(p)), mul(rsub(1.0, g), log(rsub(1.0, p)))));
    Tensor per_item = item_sums(per_pixel);
    if (reduction == BceReduction::mean) per_item = scale(per_item, 1.0 / static_cast<double>(pixels_per_item(g)));
    return mean(per_item);
}

JholTerms jhol_terms(const SaliencyPair& pair, double eps) {
    check_pair(pair, "jhol_terms");
    const Tensor& p = pair.pred;
    const Tensor& g = pair.gt;
    const Tensor not_p = rsub(1.0, p);
    const Tensor not_g = rsub(1.0, g);
    const Tensor false_pos = mul(p, not_g);
    const Tensor false_neg = mul(g, not_p);
    const Tensor error = add(false_pos, false_neg);

    const Ratio l1 = guarded_ratio(item_sums(false_pos), item_sums(p), eps);
    const Ratio l2 = guarded_ratio(item_sums(false_neg), item_sums(g), eps);
    const Ratio l3 = guarded_ratio(item_sums(error), item_sums(sub(add(p, g), mul(p, g))), eps);
    const Ratio l4 = guarded_ratio(item_sums(mul(not_p, not_g)), item_sums(rsub(1.0, error)), eps);
    return {l1.value, l2.value, l3.value, l4.value,
            l1.degenerate || l2.degenerate || l3.degenerate || l4.degenerate};
}

Tensor jhol_loss(const SaliencyPair& pair, const LossConfig& cfg) {
    cfg.validate();
    const JholTerms t = jhol_terms(pair, cfg.eps);
    Tensor total;
    auto accumulate = [&](double weight, const Tensor& term) {
        if (weight == 0.0) return;
        const Tensor w = scale(term, weight);
        total = total.defined() ? add(total, w) : w;
    };
    accumulate(cfg.lambda1, t.l1);
    accumulate(cfg.lambda2, t.l2);
    accumulate(cfg.lambda3, t.l3);
    accumulate(cfg.lambda4, cfg.l4_complement ? rsub(1.0, t.l4) : t.l4);
    if (!total.defined()) return Tensor::scalar(0.0);
    return total;
}

Tensor total_loss(const SaliencyPair& final_pair, const std::vector<SaliencyPair>& side_pairs,
                  const LossConfig& cfg) {
    cfg.validate();
    auto one = [&](const SaliencyPair& pair) {
        const Tensor bce = bce_loss(pair, cfg.bce_reduction, cfg.eps);
        if (cfg.mu == 0.0) return bce;
        if (cfg.lambda1 == 0.0 && cfg.lambda2 == 0.0 && cfg.lambda3 == 0.0 && cfg.lambda4 == 0.0) return bce;
        return add(bce, scale(jhol_loss(pair, cfg), cfg.mu));
    };
    Tensor total = one(final_pair);
    for (const auto& side : side_pairs) total = add(total, one(side));
    return total;
}

}  // namespace m2r
