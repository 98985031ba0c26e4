#include "m2r/aiam.hpp"

#include "m2r/error.hpp"
#include "m2r/ops.hpp"

namespace m2r {

namespace {

void require_rank4(const Tensor& x, const char* what) {
    if (x.rank() != 4) throw DimensionError(std::string("aiam: ") + what + " must be [N,C,H,W], got " + to_string(x.shape()));
}

}  // namespace

Tensor downsample2(const Tensor& x, std::size_t height, std::size_t width) {
    require_rank4(x, "downsample input");
    if (x.dim(2) != 2 * height || x.dim(3) != 2 * width) {
        throw DimensionError("downsample2: " + to_string(x.shape()) + " is not twice " + std::to_string(height) + "x" +
                             std::to_string(width));
    }
    return max_pool2d(x, 2, 2);
}

Tensor upsample2(const Tensor& x, std::size_t height, std::size_t width) {
    require_rank4(x, "upsample input");
    if (2 * x.dim(2) != height || 2 * x.dim(3) != width) {
        throw DimensionError("upsample2: " + to_string(x.shape()) + " is not half of " + std::to_string(height) +
                             "x" + std::to_string(width));
    }
    return resample(x, height, width, ResampleMode::bilinear);
}

AiamBlock::AiamBlock(ParameterStore& store, const std::string& name, std::size_t level, std::size_t low_channels,
                     std::size_t mid_channels, std::size_t high_channels, const AiamOptions& options)
    : level_(level),
      low_channels_(low_channels),
      mid_channels_(mid_channels),
      high_channels_(high_channels),
      options_(options) {
    if (options.i1) {
        i1_low_mid_ = ConvBnRelu(store, name + ".i1.low_mid", low_channels + mid_channels, mid_channels, 3);
        i1_with_high_ = ConvBnRelu(store, name + ".i1.with_high", mid_channels + high_channels, mid_channels, 3);
    }
    if (options.i2) {
        i2_low_high_ = ConvBnRelu(store, name + ".i2.low_high", low_channels + high_channels, mid_channels, 3);
        i2_with_mid_ = ConvBnRelu(store, name + ".i2.with_mid", 2 * mid_channels, mid_channels, 3);
    }
    if (options.i1 || options.i2) {
        residual_a_ = ConvBnRelu(store, name + ".residual.a", mid_channels, mid_channels, 3);
        residual_b_ = ConvBnRelu(store, name + ".residual.b", mid_channels, mid_channels, 3);
    }
}

void AiamBlock::check_levels(const Tensor& low, const Tensor& mid, const Tensor& high) const {
    require_rank4(low, "low");
    require_rank4(mid, "mid");
    require_rank4(high, "high");
    const std::string where = "aiam level " + std::to_string(level_) + ": ";
    if (low.dim(1) != low_channels_ || mid.dim(1) != mid_channels_ || high.dim(1) != high_channels_) {
        throw DimensionError(where + "channel counts " + to_string(low.shape()) + ", " + to_string(mid.shape()) +
                             ", " + to_string(high.shape()));
    }
    if (low.dim(2) != 2 * mid.dim(2) || low.dim(3) != 2 * mid.dim(3) || mid.dim(2) != 2 * high.dim(2) ||
        mid.dim(3) != 2 * high.dim(3)) {
        throw DimensionError(where + "levels are not adjacent 2x steps: " + to_string(low.shape()) + ", " +
                             to_string(mid.shape()) + ", " + to_string(high.shape()));
    }
}

Tensor AiamBlock::interaction_i1(const Tensor& low, const Tensor& mid, const Tensor& high, bool training) const {
    if (!options_.i1) throw ContractError("aiam: path I1 is disabled");
    check_levels(low, mid, high);
    const std::size_t h = mid.dim(2), w = mid.dim(3);
    const Tensor a = i1_low_mid_(concat({downsample2(low, h, w), mid}, 1), training);
    return i1_with_high_(concat({a, upsample2(high, h, w)}, 1), training);
}

Tensor AiamBlock::interaction_i2(const Tensor& low, const Tensor& mid, const Tensor& high, bool training) const {
    if (!options_.i2) throw ContractError("aiam: path I2 is disabled");
    check_levels(low, mid, high);
    const std::size_t h = mid.dim(2), w = mid.dim(3);
    const Tensor a = i2_low_high_(concat({downsample2(low, h, w), upsample2(high, h, w)}, 1), training);
    return i2_with_mid_(concat({a, mid}, 1), training);
}

Tensor AiamBlock::residual(const Tensor& s, bool training) const {
    if (!options_.i1 && !options_.i2) throw ContractError("aiam: residual block absent when both paths are off");
    return add(s, residual_b_(residual_a_(s, training), training));
}

Tensor AiamBlock::forward(const Tensor& low, const Tensor& mid, const Tensor& high, bool training) const {
    check_levels(low, mid, high);
    if (!options_.i1 && !options_.i2) return mid;
    Tensor s;
    if (options_.i1) s = interaction_i1(low, mid, high, training);
    if (options_.i2) {
        const Tensor j = interaction_i2(low, mid, high, training);
        s = s.defined() ? add(s, j) : j;
    }
    return residual(s, training);
}

DecoderFuse::DecoderFuse(ParameterStore& store, const std::string& name, std::size_t rgbd_channels,
                         std::size_t rgb_channels, std::size_t out_channels)
    : conv_(store, name + ".conv", rgbd_channels + rgb_channels, out_channels, 3, 1, 1) {}

Tensor DecoderFuse::operator()(const Tensor& f_rgbd, const Tensor& f_rgb) const {
    const std::size_t r = f_rgbd.rank();
    if (r != f_rgb.rank() || r < 3 || f_rgbd.dim(r - 1) != f_rgb.dim(r - 1) || f_rgbd.dim(r - 2) != f_rgb.dim(r - 2)) {
        throw DimensionError("decoder_fuse: resolutions differ, " + to_string(f_rgbd.shape()) + " vs " +
                             to_string(f_rgb.shape()));
    }
    const Tensor cat = concat({f_rgbd, f_rgb}, r - 3);
    if (cat.dim(r - 3) != conv_.in_channels()) {
        throw DimensionError("decoder_fuse: concatenated " + std::to_string(cat.dim(r - 3)) +
                             " channels, conv expects " + std::to_string(conv_.in_channels()));
    }
    return conv_(cat);
}

}  // namespace m2r
