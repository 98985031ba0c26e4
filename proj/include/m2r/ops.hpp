#pragma once

// Differentiable primitives. Spatial ops take [N,C,H,W] or a single
// [C,H,W] map (treated as N = 1, result keeps the caller's rank).

#include <cstddef>
#include <vector>

#include "m2r/tensor.hpp"

namespace m2r {

// ---- elementwise, numpy-style broadcasting (right-aligned, size-1 stretches)

Shape broadcast_shape(const Shape& a, const Shape& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& x, double factor);
Tensor shift(const Tensor& x, double offset);
/// offset - x
Tensor rsub(double offset, const Tensor& x);
Tensor neg(const Tensor& x);

Tensor log(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor sigmoid(const Tensor& x);
/// Subgradient 0 at x == 0.
Tensor relu(const Tensor& x);
Tensor softmax(const Tensor& x, std::ptrdiff_t axis);
/// Gradient passes where lo <= x <= hi, zero outside.
Tensor clamp(const Tensor& x, double lo, double hi);
/// max(x, floor) elementwise; gradient passes where x >= floor.
Tensor clamp_min(const Tensor& x, double floor);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator*(const Tensor& a, double s) { return scale(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }
inline Tensor operator+(const Tensor& a, double s) { return shift(a, s); }
inline Tensor operator+(double s, const Tensor& a) { return shift(a, s); }
inline Tensor operator-(double s, const Tensor& a) { return rsub(s, a); }
inline Tensor operator-(const Tensor& a, double s) { return shift(a, -s); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

// ---- reductions

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// Sums everything except axis 0: [N, ...] -> [N].
Tensor sum_per_item(const Tensor& x);

// ---- shape

Tensor reshape(const Tensor& x, Shape shape);
Tensor transpose(const Tensor& x, std::size_t axis_a, std::size_t axis_b);
/// Concatenates along `axis`; all other extents must agree.
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
/// Inserts a leading unit axis.
Tensor unsqueeze0(const Tensor& x);

// ---- linear algebra

/// [M,K] x [K,N] -> [M,N], or batched [B,M,K] x [B,K,N] -> [B,M,N].
Tensor matmul(const Tensor& a, const Tensor& b);

// ---- convolution / pooling / resampling

/// Cross-correlation. weight [C_out, C_in, k, k] (k odd), bias [C_out] or undefined.
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, std::size_t stride = 1,
              std::size_t pad = 0);

/// Windowed max, ties go to the first element in scan order.
Tensor max_pool2d(const Tensor& x, std::size_t kernel, std::size_t stride);
/// Per-channel spatial max: [N,C,H,W] -> [N,C,1,1].
Tensor global_max_pool(const Tensor& x);
/// Per-position channel max: [N,C,H,W] -> [N,1,H,W].
Tensor channel_max_pool(const Tensor& x);

enum class ResampleMode { nearest, bilinear };

/// Half-pixel-centre sampling (align_corners = false), edges clamped.
Tensor resample(const Tensor& x, std::size_t out_height, std::size_t out_width, ResampleMode mode);

// ---- normalization

struct BatchNormState {
    std::vector<double>& running_mean;
    std::vector<double>& running_var;
};

/// Training mode normalizes with biased batch statistics and folds the
/// unbiased variance into the running estimate; eval mode uses the running
/// estimate.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormState state, bool training,
                  double momentum = 0.1, double eps = 1e-5);

}  // namespace m2r
