#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "m2r/error.hpp"
#include "m2r/ops.hpp"

namespace m2r {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

// [N,C,H,W] view of a rank-3 or rank-4 tensor.
struct Dims4 {
    std::size_t n, c, h, w;
    bool batched;

    Shape shape(std::size_t channels, std::size_t height, std::size_t width) const {
        if (batched) return {n, channels, height, width};
        return {channels, height, width};
    }
};

Dims4 dims4(const Tensor& x, const char* op) {
    const auto& s = x.shape();
    if (s.size() == 4) return {s[0], s[1], s[2], s[3], true};
    if (s.size() == 3) return {1, s[0], s[1], s[2], false};
    throw DimensionError(std::string(op) + " expects [C,H,W] or [N,C,H,W], got " + to_string(s));
}

void record_index(std::size_t index) {
    if (KinkProbe::active()) KinkProbe::record(index);
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    const auto& sa = a.shape();
    const auto& sb = b.shape();
    std::size_t batch = 1;
    std::size_t m = 0, k = 0, n = 0;
    Shape out_shape;
    if (sa.size() == 2 && sb.size() == 2) {
        m = sa[0];
        k = sa[1];
        n = sb[1];
        if (sb[0] != k) {
            throw DimensionError("matmul inner dimensions differ: " + to_string(sa) + " x " + to_string(sb) + " (axis 1 of a vs axis 0 of b)");
        }
        out_shape = {m, n};
    } else if (sa.size() == 3 && sb.size() == 3) {
        batch = sa[0];
        m = sa[1];
        k = sa[2];
        n = sb[2];
        if (sb[0] != batch) throw DimensionError("batched matmul batch sizes differ: " + to_string(sa) + " x " + to_string(sb));
        if (sb[1] != k) {
            throw DimensionError("matmul inner dimensions differ: " + to_string(sa) + " x " + to_string(sb) + " (axis 2 of a vs axis 1 of b)");
        }
        out_shape = {batch, m, n};
    } else {
        throw DimensionError("matmul expects two rank-2 or two rank-3 tensors, got " + to_string(sa) + " and " + to_string(sb));
    }

    std::vector<double> out(batch * m * n);
    for (std::size_t i = 0; i < batch; ++i) {
        ConstMatrixMap A(a.values().data() + i * m * k, m, k);
        ConstMatrixMap B(b.values().data() + i * k * n, k, n);
        MatrixMap C(out.data() + i * m * n, m, n);
        C.noalias() = A * B;
    }
    auto an = a.node();
    auto bn = b.node();
    return make_result(out_shape, std::move(out), {&a, &b}, [an, bn, batch, m, k, n](detail::Node& self) {
        for (std::size_t i = 0; i < batch; ++i) {
            ConstMatrixMap G(self.grad.data() + i * m * n, m, n);
            if (an->requires_grad) {
                MatrixMap GA(an->ensure_grad().data() + i * m * k, m, k);
                ConstMatrixMap B(bn->value.data() + i * k * n, k, n);
                GA.noalias() += G * B.transpose();
            }
            if (bn->requires_grad) {
                MatrixMap GB(bn->ensure_grad().data() + i * k * n, k, n);
                ConstMatrixMap A(an->value.data() + i * m * k, m, k);
                GB.noalias() += A.transpose() * G;
            }
        }
    });
}

namespace {

struct ConvGeometry {
    std::size_t c_in, h, w, k, stride, pad, h_out, w_out;
    bool pointwise() const { return k == 1 && stride == 1 && pad == 0; }
};

// col is [c_in*k*k, h_out*w_out]
void im2col(const double* image, const ConvGeometry& g, double* col) {
    const std::size_t cols = g.h_out * g.w_out;
    for (std::size_t c = 0; c < g.c_in; ++c) {
        for (std::size_t ky = 0; ky < g.k; ++ky) {
            for (std::size_t kx = 0; kx < g.k; ++kx) {
                double* row = col + ((c * g.k + ky) * g.k + kx) * cols;
                for (std::size_t oy = 0; oy < g.h_out; ++oy) {
                    const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
                    for (std::size_t ox = 0; ox < g.w_out; ++ox) {
                        const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
                        const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<std::ptrdiff_t>(g.h) &&
                                            ix < static_cast<std::ptrdiff_t>(g.w);
                        row[oy * g.w_out + ox] = inside ? image[(c * g.h + iy) * g.w + ix] : 0.0;
                    }
                }
            }
        }
    }
}

void col2im_add(const double* col, const ConvGeometry& g, double* image) {
    const std::size_t cols = g.h_out * g.w_out;
    for (std::size_t c = 0; c < g.c_in; ++c) {
        for (std::size_t ky = 0; ky < g.k; ++ky) {
            for (std::size_t kx = 0; kx < g.k; ++kx) {
                const double* row = col + ((c * g.k + ky) * g.k + kx) * cols;
                for (std::size_t oy = 0; oy < g.h_out; ++oy) {
                    const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
                    for (std::size_t ox = 0; ox < g.w_out; ++ox) {
                        const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
                        if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) continue;
                        image[(c * g.h + iy) * g.w + ix] += row[oy * g.w_out + ox];
                    }
                }
            }
        }
    }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, std::size_t stride, std::size_t pad) {
    const Dims4 d = dims4(input, "conv2d");
    const auto& ws = weight.shape();
    if (ws.size() != 4) throw DimensionError("conv2d weight must be [C_out,C_in,k,k], got " + to_string(ws));
    if (ws[1] != d.c) {
        throw DimensionError("conv2d channel mismatch: input has " + std::to_string(d.c) + " channels (axis 1), weight expects " +
                             std::to_string(ws[1]) + " (axis 1 of " + to_string(ws) + ")");
    }
    if (ws[2] != ws[3] || ws[2] % 2 == 0) throw DimensionError("conv2d kernel must be square and odd, got " + to_string(ws));
    if (stride == 0) throw ContractError("conv2d stride must be >= 1");
    const std::size_t c_out = ws[0];
    const std::size_t k = ws[2];
    if (bias.defined() && bias.shape() != Shape{c_out}) {
        throw DimensionError("conv2d bias must be [" + std::to_string(c_out) + "], got " + to_string(bias.shape()));
    }
    const std::size_t span_h = d.h + 2 * pad;
    const std::size_t span_w = d.w + 2 * pad;
    if (span_h < k || span_w < k || (span_h - k) % stride != 0 || (span_w - k) % stride != 0) {
        throw DimensionError("conv2d output size not integral for input " + to_string(input.shape()) + ", k=" +
                             std::to_string(k) + ", stride=" + std::to_string(stride) + ", pad=" + std::to_string(pad));
    }
    const ConvGeometry g{d.c, d.h, d.w, k, stride, pad, (span_h - k) / stride + 1, (span_w - k) / stride + 1};
    const std::size_t rows = d.c * k * k;
    const std::size_t cols = g.h_out * g.w_out;

    std::vector<double> out(d.n * c_out * cols);
    std::vector<double> col(g.pointwise() ? 0 : rows * cols);
    ConstMatrixMap W(weight.values().data(), c_out, rows);
    for (std::size_t n = 0; n < d.n; ++n) {
        const double* image = input.values().data() + n * d.c * d.h * d.w;
        const double* col_ptr = image;
        if (!g.pointwise()) {
            im2col(image, g, col.data());
            col_ptr = col.data();
        }
        MatrixMap O(out.data() + n * c_out * cols, c_out, cols);
        O.noalias() = W * ConstMatrixMap(col_ptr, rows, cols);
        if (bias.defined()) {
            const auto bv = bias.values();
            for (std::size_t co = 0; co < c_out; ++co) O.row(co).array() += bv[co];
        }
    }

    auto xn = input.node();
    auto wn = weight.node();
    auto bn = bias.defined() ? bias.node() : nullptr;
    const std::size_t batch = d.n;
    return make_result(d.shape(c_out, g.h_out, g.w_out), std::move(out), {&input, &weight, &bias},
                       [xn, wn, bn, g, batch, c_out, rows, cols](detail::Node& self) {
                           std::vector<double> col(g.pointwise() ? 0 : rows * cols);
                           std::vector<double> dcol(xn->requires_grad && !g.pointwise() ? rows * cols : 0);
                           ConstMatrixMap W(wn->value.data(), c_out, rows);
                           const std::size_t image_size = g.c_in * g.h * g.w;
                           for (std::size_t n = 0; n < batch; ++n) {
                               ConstMatrixMap G(self.grad.data() + n * c_out * cols, c_out, cols);
                               if (wn->requires_grad) {
                                   const double* image = xn->value.data() + n * image_size;
                                   const double* col_ptr = image;
                                   if (!g.pointwise()) {
                                       im2col(image, g, col.data());
                                       col_ptr = col.data();
                                   }
                                   MatrixMap GW(wn->ensure_grad().data(), c_out, rows);
                                   GW.noalias() += G * ConstMatrixMap(col_ptr, rows, cols).transpose();
                               }
                               if (bn && bn->requires_grad) {
                                   auto& gb = bn->ensure_grad();
                                   for (std::size_t co = 0; co < c_out; ++co) gb[co] += G.row(co).sum();
                               }
                               if (xn->requires_grad) {
                                   double* gimage = xn->ensure_grad().data() + n * image_size;
                                   if (g.pointwise()) {
                                       MatrixMap GX(gimage, rows, cols);
                                       GX.noalias() += W.transpose() * G;
                                   } else {
                                       MatrixMap DC(dcol.data(), rows, cols);
                                       DC.noalias() = W.transpose() * G;
                                       col2im_add(dcol.data(), g, gimage);
                                   }
                               }
                           }
                       });
}

Tensor max_pool2d(const Tensor& x, std::size_t kernel, std::size_t stride) {
    const Dims4 d = dims4(x, "max_pool2d");
    if (kernel == 0 || stride == 0) throw ContractError("max_pool2d kernel and stride must be >= 1");
    if (d.h < kernel || d.w < kernel) {
        throw DimensionError("max_pool2d window " + std::to_string(kernel) + " larger than input " + to_string(x.shape()));
    }
    const std::size_t h_out = (d.h - kernel) / stride + 1;
    const std::size_t w_out = (d.w - kernel) / stride + 1;
    const auto xv = x.values();
    std::vector<double> out(d.n * d.c * h_out * w_out);
    auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
    std::size_t o = 0;
    for (std::size_t plane = 0; plane < d.n * d.c; ++plane) {
        const std::size_t base = plane * d.h * d.w;
        for (std::size_t oy = 0; oy < h_out; ++oy) {
            for (std::size_t ox = 0; ox < w_out; ++ox, ++o) {
                std::size_t best = base + (oy * stride) * d.w + ox * stride;
                for (std::size_t ky = 0; ky < kernel; ++ky) {
                    for (std::size_t kx = 0; kx < kernel; ++kx) {
                        const std::size_t i = base + (oy * stride + ky) * d.w + ox * stride + kx;
                        if (xv[i] > xv[best]) best = i;
                    }
                }
                (*argmax)[o] = best;
                out[o] = xv[best];
                record_index(best);
            }
        }
    }
    auto xn = x.node();
    return make_result(d.shape(d.c, h_out, w_out), std::move(out), {&x}, [xn, argmax](detail::Node& self) {
        auto& gx = xn->ensure_grad();
        for (std::size_t i = 0; i < argmax->size(); ++i) gx[(*argmax)[i]] += self.grad[i];
    });
}

Tensor global_max_pool(const Tensor& x) {
    const Dims4 d = dims4(x, "global_max_pool");
    if (d.n * d.c == 0 || d.h * d.w == 0) throw DimensionError("global_max_pool of an empty tensor " + to_string(x.shape()));
    const auto xv = x.values();
    const std::size_t plane = d.h * d.w;
    std::vector<double> out(d.n * d.c);
    auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
    for (std::size_t p = 0; p < out.size(); ++p) {
        std::size_t best = p * plane;
        for (std::size_t i = p * plane + 1; i < (p + 1) * plane; ++i) {
            if (xv[i] > xv[best]) best = i;
        }
        (*argmax)[p] = best;
        out[p] = xv[best];
        record_index(best);
    }
    auto xn = x.node();
    return make_result(d.shape(d.c, 1, 1), std::move(out), {&x}, [xn, argmax](detail::Node& self) {
        auto& gx = xn->ensure_grad();
        for (std::size_t i = 0; i < argmax->size(); ++i) gx[(*argmax)[i]] += self.grad[i];
    });
}

Tensor channel_max_pool(const Tensor& x) {
    const Dims4 d = dims4(x, "channel_max_pool");
    if (d.n * d.c == 0 || d.h * d.w == 0) throw DimensionError("channel_max_pool of an empty tensor " + to_string(x.shape()));
    const auto xv = x.values();
    const std::size_t plane = d.h * d.w;
    std::vector<double> out(d.n * plane);
    auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
    for (std::size_t n = 0; n < d.n; ++n) {
        for (std::size_t p = 0; p < plane; ++p) {
            std::size_t best = n * d.c * plane + p;
            for (std::size_t c = 1; c < d.c; ++c) {
                const std::size_t i = (n * d.c + c) * plane + p;
                if (xv[i] > xv[best]) best = i;
            }
            (*argmax)[n * plane + p] = best;
            out[n * plane + p] = xv[best];
            record_index(best);
        }
    }
    auto xn = x.node();
    return make_result(d.shape(1, d.h, d.w), std::move(out), {&x}, [xn, argmax](detail::Node& self) {
        auto& gx = xn->ensure_grad();
        for (std::size_t i = 0; i < argmax->size(); ++i) gx[(*argmax)[i]] += self.grad[i];
    });
}

namespace {

struct AxisTaps {
    std::vector<std::size_t> lo, hi;
    std::vector<double> frac;  // weight of hi
};

AxisTaps axis_taps(std::size_t in, std::size_t out, ResampleMode mode) {
    AxisTaps t;
    t.lo.resize(out);
    t.hi.resize(out);
    t.frac.resize(out);
    const double ratio = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t o = 0; o < out; ++o) {
        if (mode == ResampleMode::nearest) {
            const auto src = std::min(static_cast<std::size_t>(std::floor((o + 0.5) * ratio)), in - 1);
            t.lo[o] = t.hi[o] = src;
            t.frac[o] = 0.0;
        } else {
            const double src = std::max((o + 0.5) * ratio - 0.5, 0.0);
            const auto lo = std::min(static_cast<std::size_t>(std::floor(src)), in - 1);
            t.lo[o] = lo;
            t.hi[o] = std::min(lo + 1, in - 1);
            t.frac[o] = src - static_cast<double>(lo);
        }
    }
    return t;
}

}  // namespace

Tensor resample(const Tensor& x, std::size_t out_height, std::size_t out_width, ResampleMode mode) {
    const Dims4 d = dims4(x, "resample");
    if (out_height == 0 || out_width == 0) throw ContractError("resample target dimensions must be >= 1");
    if (d.h == 0 || d.w == 0) throw DimensionError("resample of an empty map " + to_string(x.shape()));
    auto ty = std::make_shared<AxisTaps>(axis_taps(d.h, out_height, mode));
    auto tx = std::make_shared<AxisTaps>(axis_taps(d.w, out_width, mode));
    const auto xv = x.values();
    const std::size_t planes = d.n * d.c;
    std::vector<double> out(planes * out_height * out_width);
    for (std::size_t p = 0; p < planes; ++p) {
        const double* src = xv.data() + p * d.h * d.w;
        double* dst = out.data() + p * out_height * out_width;
        for (std::size_t oy = 0; oy < out_height; ++oy) {
            const double fy = ty->frac[oy];
            const double* r0 = src + ty->lo[oy] * d.w;
            const double* r1 = src + ty->hi[oy] * d.w;
            for (std::size_t ox = 0; ox < out_width; ++ox) {
                const double fx = tx->frac[ox];
                const double top = r0[tx->lo[ox]] * (1.0 - fx) + r0[tx->hi[ox]] * fx;
                const double bottom = r1[tx->lo[ox]] * (1.0 - fx) + r1[tx->hi[ox]] * fx;
                dst[oy * out_width + ox] = top * (1.0 - fy) + bottom * fy;
            }
        }
    }
    auto xn = x.node();
    const std::size_t h = d.h;
    const std::size_t w = d.w;
    return make_result(d.shape(d.c, out_height, out_width), std::move(out), {&x},
                       [xn, ty, tx, planes, h, w, out_height, out_width](detail::Node& self) {
                           auto& gx = xn->ensure_grad();
                           for (std::size_t p = 0; p < planes; ++p) {
                               double* dst = gx.data() + p * h * w;
                               const double* g = self.grad.data() + p * out_height * out_width;
                               for (std::size_t oy = 0; oy < out_height; ++oy) {
                                   const double fy = ty->frac[oy];
                                   double* r0 = dst + ty->lo[oy] * w;
                                   double* r1 = dst + ty->hi[oy] * w;
                                   for (std::size_t ox = 0; ox < out_width; ++ox) {
                                       const double fx = tx->frac[ox];
                                       const double v = g[oy * out_width + ox];
                                       r0[tx->lo[ox]] += v * (1.0 - fy) * (1.0 - fx);
                                       r0[tx->hi[ox]] += v * (1.0 - fy) * fx;
                                       r1[tx->lo[ox]] += v * fy * (1.0 - fx);
                                       r1[tx->hi[ox]] += v * fy * fx;
                                   }
                               }
                           }
                       });
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormState state, bool training,
                  double momentum, double eps) {
    const Dims4 d = dims4(x, "batch_norm");
    if (gamma.shape() != Shape{d.c} || beta.shape() != Shape{d.c}) {
        throw DimensionError("batch_norm affine parameters must be [" + std::to_string(d.c) + "], got gamma " +
                             to_string(gamma.shape()) + " and beta " + to_string(beta.shape()));
    }
    if (state.running_mean.size() != d.c || state.running_var.size() != d.c) {
        throw DimensionError("batch_norm running statistics must hold " + std::to_string(d.c) + " channels");
    }
    const std::size_t plane = d.h * d.w;
    const std::size_t count = d.n * plane;
    if (count == 0) throw DimensionError("batch_norm needs N*H*W >= 1, got shape " + to_string(x.shape()));

    const auto xv = x.values();
    const auto gv = gamma.values();
    const auto bv = beta.values();
    auto inv_std = std::make_shared<std::vector<double>>(d.c);
    auto x_hat = std::make_shared<std::vector<double>>(xv.size());
    std::vector<double> out(xv.size());
    for (std::size_t c = 0; c < d.c; ++c) {
        double mu = 0.0;
        double var = 0.0;
        if (training) {
            for (std::size_t n = 0; n < d.n; ++n) {
                const double* p = xv.data() + (n * d.c + c) * plane;
                for (std::size_t i = 0; i < plane; ++i) mu += p[i];
            }
            mu /= static_cast<double>(count);
            for (std::size_t n = 0; n < d.n; ++n) {
                const double* p = xv.data() + (n * d.c + c) * plane;
                for (std::size_t i = 0; i < plane; ++i) var += (p[i] - mu) * (p[i] - mu);
            }
            var /= static_cast<double>(count);
            const double unbiased = count > 1 ? var * static_cast<double>(count) / static_cast<double>(count - 1) : var;
            state.running_mean[c] = (1.0 - momentum) * state.running_mean[c] + momentum * mu;
            state.running_var[c] = (1.0 - momentum) * state.running_var[c] + momentum * unbiased;
        } else {
            mu = state.running_mean[c];
            var = state.running_var[c];
        }
        const double is = 1.0 / std::sqrt(var + eps);
        (*inv_std)[c] = is;
        for (std::size_t n = 0; n < d.n; ++n) {
            const std::size_t base = (n * d.c + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
                const double xh = (xv[base + i] - mu) * is;
                (*x_hat)[base + i] = xh;
                out[base + i] = gv[c] * xh + bv[c];
            }
        }
    }

    auto xn = x.node();
    auto gn = gamma.node();
    auto bn = beta.node();
    const std::size_t batch = d.n;
    const std::size_t channels = d.c;
    return make_result(x.shape(), std::move(out), {&x, &gamma, &beta},
                       [xn, gn, bn, inv_std, x_hat, training, batch, channels, plane, count](detail::Node& self) {
                           const auto& g = self.grad;
                           for (std::size_t c = 0; c < channels; ++c) {
                               double sum_g = 0.0;
                               double sum_gx = 0.0;
                               for (std::size_t n = 0; n < batch; ++n) {
                                   const std::size_t base = (n * channels + c) * plane;
                                   for (std::size_t i = 0; i < plane; ++i) {
                                       sum_g += g[base + i];
                                       sum_gx += g[base + i] * (*x_hat)[base + i];
                                   }
                               }
                               if (gn->requires_grad) gn->ensure_grad()[c] += sum_gx;
                               if (bn->requires_grad) bn->ensure_grad()[c] += sum_g;
                               if (!xn->requires_grad) continue;
                               auto& gx = xn->ensure_grad();
                               const double scale = gn->value[c] * (*inv_std)[c];
                               const double mean_g = sum_g / static_cast<double>(count);
                               const double mean_gx = sum_gx / static_cast<double>(count);
                               for (std::size_t n = 0; n < batch; ++n) {
                                   const std::size_t base = (n * channels + c) * plane;
                                   for (std::size_t i = 0; i < plane; ++i) {
                                       const std::size_t k = base + i;
                                       gx[k] += training ? scale * (g[k] - mean_g - (*x_hat)[k] * mean_gx) : scale * g[k];
                                   }
                               }
                           }
                       });
}

}  // namespace m2r
