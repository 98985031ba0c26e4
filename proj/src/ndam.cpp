#include "m2r/ndam.hpp"

#include <algorithm>

#include "m2r/error.hpp"
#include "m2r/ops.hpp"

namespace m2r {

namespace {

// Applies fn to a [N,C,H,W] view and restores the caller's rank.
template <typename Fn>
Tensor with_batch(const Tensor& x, Fn&& fn) {
    if (x.rank() == 4) return fn(x);
    if (x.rank() != 3) throw DimensionError("ndam: expected [C,H,W] or [N,C,H,W], got " + to_string(x.shape()));
    Tensor y = fn(unsqueeze0(x));
    Shape s(y.shape().begin() + 1, y.shape().end());
    return reshape(y, s);
}

Tensor flatten_spatial(const Tensor& x) {
    return reshape(x, {x.dim(0), x.dim(1), x.dim(2) * x.dim(3)});
}

}  // namespace

Tensor fuse_modalities(const Tensor& f_rgb, const Tensor& f_d) {
    if (f_rgb.shape() != f_d.shape()) {
        throw DimensionError("fuse_modalities: rgb " + to_string(f_rgb.shape()) + " vs depth " +
                             to_string(f_d.shape()));
    }
    return add(f_rgb, f_d);
}

NdamBlock::NdamBlock(ParameterStore& store, const std::string& name, std::size_t level, std::size_t channels,
                     const NdamOptions& options)
    : level_(level), channels_(channels), options_(options) {
    if (channels == 0) throw ConfigError("ndam: channel count must be positive");
    if (options.key_divisor == 0 || options.mlp_reduction == 0) throw ConfigError("ndam: divisors must be positive");
    if (options.spatial_kernel % 2 == 0) throw ConfigError("ndam: spatial gate kernel must be odd");
    reduced_ = std::max<std::size_t>(1, channels / options.key_divisor);
    if (options.p1) {
        c1_query_ = Conv2d(store, name + ".c1.query", channels, channels, 1);
        c1_key_ = Conv2d(store, name + ".c1.key", channels, channels, 1);
        c1_value_ = Conv2d(store, name + ".c1.value", channels, channels, 1);
        s1_query_ = Conv2d(store, name + ".s1.query", channels, reduced_, 1);
        s1_key_ = Conv2d(store, name + ".s1.key", channels, reduced_, 1);
        s1_value_ = Conv2d(store, name + ".s1.value", channels, reduced_, 1);
        s1_lift_ = Conv2d(store, name + ".s1.lift", reduced_, channels, 1);
    }
    if (options.p2) {
        const std::size_t hidden = std::max<std::size_t>(1, channels / options.mlp_reduction);
        mlp_in_ = Linear(store, name + ".c2.mlp_in", channels, hidden);
        mlp_out_ = Linear(store, name + ".c2.mlp_out", hidden, channels);
        gate_conv_ = Conv2d(store, name + ".s2.conv", 1, 1, options.spatial_kernel, 1, options.spatial_kernel / 2);
    }
}

Tensor NdamBlock::batched(const Tensor& x) const {
    if (x.rank() != 4 || x.dim(1) != channels_) {
        throw DimensionError("ndam level " + std::to_string(level_) + ": expected " + std::to_string(channels_) +
                             " channels, got " + to_string(x.shape()));
    }
    return x;
}

Tensor NdamBlock::channel_affinity(const Tensor& x) const {
    if (!options_.p1) throw ContractError("ndam: phase P1 is disabled");
    return with_batch(x, [&](const Tensor& b) {
        batched(b);
        const Tensor q = flatten_spatial(c1_query_(b));
        const Tensor k = flatten_spatial(c1_key_(b));
        const Tensor a = matmul(q, transpose(k, 1, 2));
        return softmax(transpose(a, 1, 2), -1);
    });
}

Tensor NdamBlock::channel_attention_p1(const Tensor& x) const {
    return with_batch(x, [&](const Tensor& b) {
        const Tensor m = channel_affinity(b);
        const Tensor v = flatten_spatial(c1_value_(b));
        return add(reshape(matmul(m, v), b.shape()), b);
    });
}

Tensor NdamBlock::spatial_affinity(const Tensor& x) const {
    if (!options_.p1) throw ContractError("ndam: phase P1 is disabled");
    return with_batch(x, [&](const Tensor& b) {
        batched(b);
        const Tensor q = flatten_spatial(s1_query_(b));
        const Tensor k = flatten_spatial(s1_key_(b));
        return softmax(matmul(transpose(q, 1, 2), k), -1);
    });
}

Tensor NdamBlock::spatial_attention_p1(const Tensor& x) const {
    return with_batch(x, [&](const Tensor& b) {
        const Tensor s = spatial_affinity(b);
        const Tensor v = flatten_spatial(s1_value_(b));
        const Tensor attended = matmul(v, transpose(s, 1, 2));
        const Tensor lifted = s1_lift_(reshape(attended, {b.dim(0), reduced_, b.dim(2), b.dim(3)}));
        return add(lifted, b);
    });
}

Tensor NdamBlock::attention_p1(const Tensor& x) const { return spatial_attention_p1(channel_attention_p1(x)); }

Tensor NdamBlock::channel_gate(const Tensor& x) const {
    if (!options_.p2) throw ContractError("ndam: phase P2 is disabled");
    return with_batch(x, [&](const Tensor& b) {
        batched(b);
        const std::size_t n = b.dim(0);
        const Tensor pooled = reshape(global_max_pool(b), {n, channels_});
        const Tensor logits = mlp_out_(relu(mlp_in_(pooled)));
        return reshape(sigmoid(logits), {n, channels_, 1, 1});
    });
}

Tensor NdamBlock::spatial_gate(const Tensor& x) const {
    if (!options_.p2) throw ContractError("ndam: phase P2 is disabled");
    return with_batch(x, [&](const Tensor& b) {
        batched(b);
        return sigmoid(gate_conv_(channel_max_pool(b)));
    });
}

Tensor NdamBlock::channel_attention_p2(const Tensor& x) const {
    return with_batch(x, [&](const Tensor& b) { return mul(channel_gate(b), b); });
}

Tensor NdamBlock::spatial_attention_p2(const Tensor& x) const {
    return with_batch(x, [&](const Tensor& b) { return mul(spatial_gate(b), b); });
}

Tensor NdamBlock::attention_p2(const Tensor& x) const { return spatial_attention_p2(channel_attention_p2(x)); }

Tensor NdamBlock::refine(const Tensor& f_cm) const {
    Tensor y = f_cm;
    if (options_.p1) y = attention_p1(y);
    if (options_.p2) y = attention_p2(y);
    return y;
}

Tensor NdamBlock::forward(const Tensor& f_rgb, const Tensor& f_d) const {
    return refine(fuse_modalities(f_rgb, f_d));
}

}  // namespace m2r
