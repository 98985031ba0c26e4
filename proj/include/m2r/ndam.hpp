#pragma once
// Nested dual attention over fused RGB + depth features.
//
// Phase P1 is a channel-affinity stage C1 followed by a position-affinity
// stage S1 on the flattened [C, X] view (X = H * W). Phase P2 is a
// max-pooled channel gate C2 followed by a channel-max spatial gate S2.
// Every stage accepts [N,C,H,W] or a single [C,H,W] map.

#include <cstddef>
#include <string>

#include "m2r/nn.hpp"
#include "m2r/tensor.hpp"

namespace m2r {

/// f_rgb + f_d; shapes must match exactly.
Tensor fuse_modalities(const Tensor& f_rgb, const Tensor& f_d);

struct NdamOptions {
    bool p1 = true;
    bool p2 = true;
    std::size_t key_divisor = 8;
    std::size_t mlp_reduction = 8;
    std::size_t spatial_kernel = 7;
};

class NdamBlock {
public:
    NdamBlock() = default;
    NdamBlock(ParameterStore& store, const std::string& name, std::size_t level, std::size_t channels,
              const NdamOptions& options = {});

    std::size_t level() const { return level_; }
    std::size_t channels() const { return channels_; }
    /// max(1, C / key_divisor)
    std::size_t reduced_channels() const { return reduced_; }
    const NdamOptions& options() const { return options_; }

    /// C1: M x V(f) + f with M = softmax over the transposed C x C affinity.
    Tensor channel_attention_p1(const Tensor& x) const;
    /// S1: V'(f) x softmax(Q'^T K')^T, lifted back to C channels, + f.
    Tensor spatial_attention_p1(const Tensor& x) const;
    /// S1(C1(x)).
    Tensor attention_p1(const Tensor& x) const;

    /// sigmoid(MLP(GMP(x))), shape [N,C,1,1].
    Tensor channel_gate(const Tensor& x) const;
    /// sigmoid(Conv(GMPC(x))), shape [N,1,H,W].
    Tensor spatial_gate(const Tensor& x) const;
    Tensor channel_attention_p2(const Tensor& x) const;
    Tensor spatial_attention_p2(const Tensor& x) const;
    /// S2(C2(x)).
    Tensor attention_p2(const Tensor& x) const;

    /// The row-stochastic matrices actually applied, for inspection:
    /// [N,C,C] for C1 and [N,X,X] for S1.
    Tensor channel_affinity(const Tensor& x) const;
    Tensor spatial_affinity(const Tensor& x) const;

    /// Enabled phases applied to an already fused map.
    Tensor refine(const Tensor& f_cm) const;
    /// refine(fuse_modalities(f_rgb, f_d)).
    Tensor forward(const Tensor& f_rgb, const Tensor& f_d) const;

private:
    Tensor batched(const Tensor& x) const;

    std::size_t level_ = 0;
    std::size_t channels_ = 0;
    std::size_t reduced_ = 0;
    NdamOptions options_;
    Conv2d c1_query_, c1_key_, c1_value_;
    Conv2d s1_query_, s1_key_, s1_value_, s1_lift_;
    Linear mlp_in_, mlp_out_;
    Conv2d gate_conv_;
};

}  // namespace m2r
