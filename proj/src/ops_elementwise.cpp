#include <algorithm>
#include <cmath>
#include <limits>

#include "m2r/error.hpp"
#include "m2r/ops.hpp"

namespace m2r {

namespace {

struct BroadcastPlan {
    Shape out;
    std::vector<std::size_t> stride_a;  // 0 along stretched axes
    std::vector<std::size_t> stride_b;
};

std::vector<std::size_t> aligned_strides(const Shape& in, const Shape& out) {
    const std::size_t rank = out.size();
    const std::size_t lead = rank - in.size();
    std::vector<std::size_t> strides(rank, 0);
    std::size_t stride = 1;
    for (std::size_t d = in.size(); d-- > 0;) {
        strides[d + lead] = in[d] == 1 ? 0 : stride;
        stride *= in[d];
    }
    return strides;
}

BroadcastPlan plan_broadcast(const Shape& a, const Shape& b) {
    BroadcastPlan plan;
    plan.out = broadcast_shape(a, b);
    plan.stride_a = aligned_strides(a, plan.out);
    plan.stride_b = aligned_strides(b, plan.out);
    return plan;
}

// f(out_index, a_index, b_index)
template <typename F>
void for_each_broadcast(const BroadcastPlan& plan, F&& f) {
    const std::size_t n = numel(plan.out);
    const std::size_t rank = plan.out.size();
    std::vector<std::size_t> idx(rank, 0);
    std::size_t ia = 0;
    std::size_t ib = 0;
    for (std::size_t i = 0; i < n; ++i) {
        f(i, ia, ib);
        for (std::size_t d = rank; d-- > 0;) {
            ++idx[d];
            ia += plan.stride_a[d];
            ib += plan.stride_b[d];
            if (idx[d] < plan.out[d]) break;
            ia -= plan.stride_a[d] * plan.out[d];
            ib -= plan.stride_b[d] * plan.out[d];
            idx[d] = 0;
        }
    }
}

// fwd(x, y) -> z; da(x, y, z) = dz/dx; db(x, y, z) = dz/dy
template <typename Fwd, typename DA, typename DB>
Tensor binary_op(const Tensor& a, const Tensor& b, Fwd fwd, DA da, DB db) {
    const auto av = a.values();
    const auto bv = b.values();
    if (a.shape() == b.shape()) {
        std::vector<double> out(av.size());
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i], bv[i]);
        auto an = a.node();
        auto bn = b.node();
        return make_result(a.shape(), std::move(out), {&a, &b}, [an, bn, da, db](detail::Node& self) {
            const auto& g = self.grad;
            if (an->requires_grad) {
                auto& ga = an->ensure_grad();
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * da(an->value[i], bn->value[i], self.value[i]);
            }
            if (bn->requires_grad) {
                auto& gb = bn->ensure_grad();
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * db(an->value[i], bn->value[i], self.value[i]);
            }
        });
    }
    auto plan = std::make_shared<BroadcastPlan>(plan_broadcast(a.shape(), b.shape()));
    std::vector<double> out(numel(plan->out));
    for_each_broadcast(*plan, [&](std::size_t i, std::size_t ia, std::size_t ib) { out[i] = fwd(av[ia], bv[ib]); });
    auto an = a.node();
    auto bn = b.node();
    return make_result(plan->out, std::move(out), {&a, &b}, [an, bn, plan, da, db](detail::Node& self) {
        const auto& g = self.grad;
        if (an->requires_grad) {
            auto& ga = an->ensure_grad();
            for_each_broadcast(*plan, [&](std::size_t i, std::size_t ia, std::size_t ib) {
                ga[ia] += g[i] * da(an->value[ia], bn->value[ib], self.value[i]);
            });
        }
        if (bn->requires_grad) {
            auto& gb = bn->ensure_grad();
            for_each_broadcast(*plan, [&](std::size_t i, std::size_t ia, std::size_t ib) {
                gb[ib] += g[i] * db(an->value[ia], bn->value[ib], self.value[i]);
            });
        }
    });
}

// fwd(x) -> y; d(x, y) = dy/dx
template <typename Fwd, typename D>
Tensor unary_op(const Tensor& x, Fwd fwd, D d) {
    const auto xv = x.values();
    std::vector<double> out(xv.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(xv[i]);
    auto xn = x.node();
    return make_result(x.shape(), std::move(out), {&x}, [xn, d](detail::Node& self) {
        auto& gx = xn->ensure_grad();
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i] * d(xn->value[i], self.value[i]);
    });
}

// Packs one boolean per element into 64-bit words for the kink probe.
template <typename Pred>
void record_decisions(std::span<const double> values, Pred pred) {
    if (!KinkProbe::active()) return;
    std::uint64_t word = 0;
    std::size_t bit = 0;
    for (double v : values) {
        word |= static_cast<std::uint64_t>(pred(v) ? 1 : 0) << bit;
        if (++bit == 64) {
            KinkProbe::record(word);
            word = 0;
            bit = 0;
        }
    }
    if (bit) KinkProbe::record(word);
}

std::size_t normalize_axis(std::ptrdiff_t axis, std::size_t rank) {
    const auto r = static_cast<std::ptrdiff_t>(rank);
    if (axis < -r || axis >= r) {
        throw DimensionError("axis " + std::to_string(axis) + " invalid for rank " + std::to_string(rank));
    }
    return static_cast<std::size_t>(axis < 0 ? axis + r : axis);
}

}  // namespace

Shape broadcast_shape(const Shape& a, const Shape& b) {
    const std::size_t rank = std::max(a.size(), b.size());
    Shape out(rank);
    for (std::size_t i = 0; i < rank; ++i) {
        const std::size_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
        const std::size_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
        if (da != db && da != 1 && db != 1) {
            throw DimensionError("cannot broadcast " + to_string(a) + " with " + to_string(b) + " (axis " +
                                 std::to_string(i) + ": " + std::to_string(da) + " vs " + std::to_string(db) + ")");
        }
        out[i] = std::max(da, db);
    }
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
    return binary_op(
        a, b, [](double x, double y) { return x + y; }, [](double, double, double) { return 1.0; },
        [](double, double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary_op(
        a, b, [](double x, double y) { return x - y; }, [](double, double, double) { return 1.0; },
        [](double, double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary_op(
        a, b, [](double x, double y) { return x * y; }, [](double, double y, double) { return y; },
        [](double x, double, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
    return binary_op(
        a, b, [](double x, double y) { return x / y; }, [](double, double y, double) { return 1.0 / y; },
        [](double, double y, double z) { return -z / y; });
}

Tensor scale(const Tensor& x, double factor) {
    return unary_op(x, [factor](double v) { return v * factor; }, [factor](double, double) { return factor; });
}

Tensor shift(const Tensor& x, double offset) {
    return unary_op(x, [offset](double v) { return v + offset; }, [](double, double) { return 1.0; });
}

Tensor rsub(double offset, const Tensor& x) {
    return unary_op(x, [offset](double v) { return offset - v; }, [](double, double) { return -1.0; });
}

Tensor neg(const Tensor& x) { return scale(x, -1.0); }

Tensor log(const Tensor& x) {
    return unary_op(x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor exp(const Tensor& x) {
    return unary_op(x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor sigmoid(const Tensor& x) {
    return unary_op(
        x,
        [](double v) {
            if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
            const double e = std::exp(v);
            return e / (1.0 + e);
        },
        [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& x) {
    record_decisions(x.values(), [](double v) { return v > 0.0; });
    return unary_op(x, [](double v) { return !(v <= 0.0) ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
    if (lo > hi) throw ContractError("clamp: lo > hi");
    record_decisions(x.values(), [lo](double v) { return v < lo; });
    record_decisions(x.values(), [hi](double v) { return v > hi; });
    return unary_op(
        x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
        [lo, hi](double v, double) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
}

Tensor clamp_min(const Tensor& x, double floor) {
    record_decisions(x.values(), [floor](double v) { return v >= floor; });
    return unary_op(
        x, [floor](double v) { return std::max(v, floor); }, [floor](double v, double) { return v >= floor ? 1.0 : 0.0; });
}

Tensor softmax(const Tensor& x, std::ptrdiff_t axis_arg) {
    const auto& shape = x.shape();
    if (shape.empty()) throw DimensionError("softmax needs rank >= 1");
    const std::size_t axis = normalize_axis(axis_arg, shape.size());
    std::size_t outer = 1;
    std::size_t inner = 1;
    for (std::size_t d = 0; d < axis; ++d) outer *= shape[d];
    for (std::size_t d = axis + 1; d < shape.size(); ++d) inner *= shape[d];
    const std::size_t len = shape[axis];
    if (len == 0) throw DimensionError("softmax over an empty axis");

    const auto xv = x.values();
    std::vector<double> out(xv.size());
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * len * inner + in;
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t k = 0; k < len; ++k) mx = std::max(mx, xv[base + k * inner]);
            double total = 0.0;
            for (std::size_t k = 0; k < len; ++k) {
                const double e = std::exp(xv[base + k * inner] - mx);
                out[base + k * inner] = e;
                total += e;
            }
            for (std::size_t k = 0; k < len; ++k) out[base + k * inner] /= total;
        }
    }
    auto xn = x.node();
    return make_result(shape, std::move(out), {&x}, [xn, outer, inner, len](detail::Node& self) {
        auto& gx = xn->ensure_grad();
        const auto& y = self.value;
        const auto& g = self.grad;
        for (std::size_t o = 0; o < outer; ++o) {
            for (std::size_t in = 0; in < inner; ++in) {
                const std::size_t base = o * len * inner + in;
                double dot = 0.0;
                for (std::size_t k = 0; k < len; ++k) dot += g[base + k * inner] * y[base + k * inner];
                for (std::size_t k = 0; k < len; ++k) {
                    const std::size_t i = base + k * inner;
                    gx[i] += y[i] * (g[i] - dot);
                }
            }
        }
    });
}

Tensor sum(const Tensor& x) {
    double total = 0.0;
    for (double v : x.values()) total += v;
    auto xn = x.node();
    return make_result(Shape{}, {total}, {&x}, [xn](detail::Node& self) {
        auto& gx = xn->ensure_grad();
        for (auto& g : gx) g += self.grad[0];
    });
}

Tensor mean(const Tensor& x) {
    const auto n = x.numel();
    if (n == 0) throw DimensionError("mean of an empty tensor");
    return scale(sum(x), 1.0 / static_cast<double>(n));
}

Tensor sum_per_item(const Tensor& x) {
    const auto& shape = x.shape();
    if (shape.empty()) throw DimensionError("sum_per_item needs rank >= 1");
    const std::size_t items = shape[0];
    const std::size_t per = items ? x.numel() / items : 0;
    const auto xv = x.values();
    std::vector<double> out(items, 0.0);
    for (std::size_t n = 0; n < items; ++n) {
        double total = 0.0;
        for (std::size_t i = 0; i < per; ++i) total += xv[n * per + i];
        out[n] = total;
    }
    auto xn = x.node();
    return make_result(Shape{items}, std::move(out), {&x}, [xn, per](detail::Node& self) {
        auto& gx = xn->ensure_grad();
        for (std::size_t n = 0; n < self.grad.size(); ++n) {
            for (std::size_t i = 0; i < per; ++i) gx[n * per + i] += self.grad[n];
        }
    });
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (numel(shape) != x.numel()) {
        throw DimensionError("reshape " + to_string(x.shape()) + " -> " + to_string(shape) + " changes element count");
    }
    std::vector<double> out(x.values().begin(), x.values().end());
    auto xn = x.node();
    return make_result(std::move(shape), std::move(out), {&x}, [xn](detail::Node& self) {
        auto& gx = xn->ensure_grad();
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i];
    });
}

Tensor unsqueeze0(const Tensor& x) {
    Shape s = x.shape();
    s.insert(s.begin(), 1);
    return reshape(x, std::move(s));
}

Tensor transpose(const Tensor& x, std::size_t axis_a, std::size_t axis_b) {
    const auto& in_shape = x.shape();
    const std::size_t rank = in_shape.size();
    if (axis_a >= rank || axis_b >= rank) {
        throw DimensionError("transpose axes (" + std::to_string(axis_a) + "," + std::to_string(axis_b) +
                             ") invalid for shape " + to_string(in_shape));
    }
    Shape out_shape = in_shape;
    std::swap(out_shape[axis_a], out_shape[axis_b]);

    // Input strides permuted into output axis order.
    std::vector<std::size_t> in_strides(rank, 1);
    for (std::size_t d = rank; d-- > 1;) in_strides[d - 1] = in_strides[d] * in_shape[d];
    auto strides = std::make_shared<std::vector<std::size_t>>(in_strides);
    std::swap((*strides)[axis_a], (*strides)[axis_b]);

    auto gather = [out_shape, strides](std::vector<std::size_t>& map) {
        const std::size_t n = numel(out_shape);
        const std::size_t r = out_shape.size();
        map.resize(n);
        std::vector<std::size_t> idx(r, 0);
        std::size_t src = 0;
        for (std::size_t i = 0; i < n; ++i) {
            map[i] = src;
            for (std::size_t d = r; d-- > 0;) {
                ++idx[d];
                src += (*strides)[d];
                if (idx[d] < out_shape[d]) break;
                src -= (*strides)[d] * out_shape[d];
                idx[d] = 0;
            }
        }
    };
    auto map = std::make_shared<std::vector<std::size_t>>();
    gather(*map);
    const auto xv = x.values();
    std::vector<double> out(map->size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[(*map)[i]];
    auto xn = x.node();
    return make_result(out_shape, std::move(out), {&x}, [xn, map](detail::Node& self) {
        auto& gx = xn->ensure_grad();
        for (std::size_t i = 0; i < map->size(); ++i) gx[(*map)[i]] += self.grad[i];
    });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
    if (parts.empty()) throw ContractError("concat of zero tensors");
    const Shape& first = parts.front().shape();
    if (axis >= first.size()) {
        throw DimensionError("concat axis " + std::to_string(axis) + " invalid for shape " + to_string(first));
    }
    Shape out_shape = first;
    out_shape[axis] = 0;
    for (const auto& p : parts) {
        const auto& s = p.shape();
        if (s.size() != first.size()) throw DimensionError("concat rank mismatch: " + to_string(s) + " vs " + to_string(first));
        for (std::size_t d = 0; d < s.size(); ++d) {
            if (d != axis && s[d] != first[d]) {
                throw DimensionError("concat extent mismatch on axis " + std::to_string(d) + ": " + to_string(s) + " vs " +
                                     to_string(first));
            }
        }
        out_shape[axis] += s[axis];
    }
    std::size_t outer = 1;
    std::size_t inner = 1;
    for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
    for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];

    auto chunks = std::make_shared<std::vector<std::size_t>>();
    for (const auto& p : parts) chunks->push_back(p.shape()[axis] * inner);
    const std::size_t row = out_shape[axis] * inner;

    std::vector<double> out(numel(out_shape));
    std::size_t offset = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const auto v = parts[k].values();
        const std::size_t c = (*chunks)[k];
        for (std::size_t o = 0; o < outer; ++o) std::copy_n(v.begin() + o * c, c, out.begin() + o * row + offset);
        offset += c;
    }
    std::vector<std::shared_ptr<detail::Node>> nodes;
    for (const auto& p : parts) nodes.push_back(p.node());
    return make_result(out_shape, std::move(out), parts, [nodes, chunks, outer, row](detail::Node& self) {
        std::size_t off = 0;
        for (std::size_t k = 0; k < nodes.size(); ++k) {
            const std::size_t c = (*chunks)[k];
            if (nodes[k]->requires_grad) {
                auto& g = nodes[k]->ensure_grad();
                for (std::size_t o = 0; o < outer; ++o) {
                    for (std::size_t i = 0; i < c; ++i) g[o * c + i] += self.grad[o * row + off + i];
                }
            }
            off += c;
        }
    });
}

}  // namespace m2r
