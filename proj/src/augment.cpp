#include "m2r/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "m2r/error.hpp"

namespace m2r {

namespace {

using Sampler = double (*)(const double* plane, std::size_t H, std::size_t W, double sy, double sx);

double bilinear_clamped(const double* p, std::size_t H, std::size_t W, double sy, double sx) {
    sy = std::clamp(sy, 0.0, static_cast<double>(H - 1));
    sx = std::clamp(sx, 0.0, static_cast<double>(W - 1));
    const auto y0 = static_cast<std::size_t>(sy), x0 = static_cast<std::size_t>(sx);
    const std::size_t y1 = std::min(y0 + 1, H - 1), x1 = std::min(x0 + 1, W - 1);
    const double fy = sy - y0, fx = sx - x0;
    return (1 - fy) * ((1 - fx) * p[y0 * W + x0] + fx * p[y0 * W + x1]) +
           fy * ((1 - fx) * p[y1 * W + x0] + fx * p[y1 * W + x1]);
}

double nearest_zero_fill(const double* p, std::size_t H, std::size_t W, double sy, double sx) {
    const double ry = std::floor(sy + 0.5), rx = std::floor(sx + 0.5);
    if (ry < 0 || rx < 0 || ry >= static_cast<double>(H) || rx >= static_cast<double>(W)) return 0.0;
    return p[static_cast<std::size_t>(ry) * W + static_cast<std::size_t>(rx)];
}

template <typename Map>
std::vector<double> remap(const std::vector<double>& in, std::size_t C, std::size_t H, std::size_t W, Sampler sample,
                          Map source) {
    std::vector<double> out(in.size());
    for (std::size_t c = 0; c < C; ++c) {
        const double* plane = in.data() + c * H * W;
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x) {
                const auto [sy, sx] = source(static_cast<double>(y), static_cast<double>(x));
                out[(c * H + y) * W + x] = sample(plane, H, W, sy, sx);
            }
    }
    return out;
}

}  // namespace

AugmentPlan plan_augmentation(std::mt19937_64& rng, std::size_t height, std::size_t width,
                              const AugmentOptions& options) {
    if (options.crop_fraction <= 0.0 || options.crop_fraction > 1.0) throw ConfigError("crop_fraction must lie in (0, 1]");
    std::uniform_real_distribution<double> u(0.0, 1.0);
    AugmentPlan plan;
    plan.flip = u(rng) < options.flip_probability;
    plan.crop = u(rng) < options.crop_probability;
    plan.crop_width = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(options.crop_fraction * width)));
    plan.crop_height = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(options.crop_fraction * height)));
    plan.crop_x = rng() % (width - plan.crop_width + 1);
    plan.crop_y = rng() % (height - plan.crop_height + 1);
    const bool rotate = u(rng) < options.rotate_probability;
    const double degrees = (2.0 * u(rng) - 1.0) * options.max_degrees;
    plan.degrees = rotate ? degrees : 0.0;
    return plan;
}

Tensor warp_map(const Tensor& chw, const AugmentPlan& plan, MapKind kind) {
    if (chw.rank() != 3) throw DimensionError("warp_map: expected [C,H,W], got " + to_string(chw.shape()));
    const std::size_t C = chw.dim(0), H = chw.dim(1), W = chw.dim(2);
    const Sampler sample = kind == MapKind::image ? bilinear_clamped : nearest_zero_fill;
    std::vector<double> v(chw.values().begin(), chw.values().end());
    if (plan.flip) {
        v = remap(v, C, H, W, sample, [&](double y, double x) { return std::pair{y, W - 1 - x}; });
    }
    if (plan.crop) {
        if (plan.crop_x + plan.crop_width > W || plan.crop_y + plan.crop_height > H) {
            throw ContractError("augmentation crop window exceeds the map");
        }
        const double ky = static_cast<double>(plan.crop_height) / H, kx = static_cast<double>(plan.crop_width) / W;
        v = remap(v, C, H, W, sample, [&](double y, double x) {
            return std::pair{plan.crop_y + (y + 0.5) * ky - 0.5, plan.crop_x + (x + 0.5) * kx - 0.5};
        });
    }
    if (plan.degrees != 0.0) {
        const double t = plan.degrees * std::numbers::pi / 180.0, c = std::cos(t), s = std::sin(t);
        const double cy = (H - 1) / 2.0, cx = (W - 1) / 2.0;
        v = remap(v, C, H, W, sample, [&](double y, double x) {
            const double dy = y - cy, dx = x - cx;
            return std::pair{cy - s * dx + c * dy, cx + c * dx + s * dy};
        });
    }
    return Tensor::from_values(chw.shape(), std::move(v));
}

Sample apply_augmentation(const Sample& sample, const AugmentPlan& plan) {
    return {warp_map(sample.rgb, plan, MapKind::image), warp_map(sample.depth, plan, MapKind::image),
            warp_map(sample.gt, plan, MapKind::mask), sample.split, sample.stem};
}

Sample augment(const Sample& sample, std::mt19937_64& rng, const AugmentOptions& options) {
    return apply_augmentation(sample, plan_augmentation(rng, sample.rgb.dim(1), sample.rgb.dim(2), options));
}

}  // namespace m2r
