#pragma once
// Adjacent interactive aggregation over three neighbouring RGB levels.
//
// Each fusion step is concat -> 3x3 conv -> BN -> ReLU down to the middle
// level's width. The progressive path fuses low with mid first, then high;
// the jumping path fuses low with high first, then mid. Low is max-pooled
// by 2, high is bilinearly upsampled by 2.

#include <cstddef>
#include <string>

#include "m2r/nn.hpp"
#include "m2r/tensor.hpp"

namespace m2r {

struct AiamOptions {
    bool i1 = true;
    bool i2 = true;
};

/// Exact 2x resampling between adjacent levels; any other ratio throws.
Tensor downsample2(const Tensor& x, std::size_t height, std::size_t width);
Tensor upsample2(const Tensor& x, std::size_t height, std::size_t width);

class AiamBlock {
public:
    AiamBlock() = default;
    AiamBlock(ParameterStore& store, const std::string& name, std::size_t level, std::size_t low_channels,
              std::size_t mid_channels, std::size_t high_channels, const AiamOptions& options = {});

    std::size_t level() const { return level_; }
    const AiamOptions& options() const { return options_; }

    Tensor interaction_i1(const Tensor& low, const Tensor& mid, const Tensor& high, bool training) const;
    Tensor interaction_i2(const Tensor& low, const Tensor& mid, const Tensor& high, bool training) const;
    /// s + CBR(CBR(s)).
    Tensor residual(const Tensor& s, bool training) const;
    /// residual(sum of enabled paths); plain `mid` when both paths are off.
    Tensor forward(const Tensor& low, const Tensor& mid, const Tensor& high, bool training) const;

private:
    void check_levels(const Tensor& low, const Tensor& mid, const Tensor& high) const;

    std::size_t level_ = 0;
    std::size_t low_channels_ = 0, mid_channels_ = 0, high_channels_ = 0;
    AiamOptions options_;
    ConvBnRelu i1_low_mid_, i1_with_high_;
    ConvBnRelu i2_low_high_, i2_with_mid_;
    ConvBnRelu residual_a_, residual_b_;
};

/// Conv3x3(Cat(f_rgbd, f_rgb)) back to the decoder width.
class DecoderFuse {
public:
    DecoderFuse() = default;
    DecoderFuse(ParameterStore& store, const std::string& name, std::size_t rgbd_channels, std::size_t rgb_channels,
                std::size_t out_channels);
    Tensor operator()(const Tensor& f_rgbd, const Tensor& f_rgb) const;
    const Conv2d& conv() const { return conv_; }

private:
    Conv2d conv_;
};

}  // namespace m2r
