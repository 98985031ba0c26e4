#pragma once
// Geometric augmentation applied identically to rgb, depth and gt.

#include <random>

#include "m2r/dataset.hpp"

namespace m2r {

struct AugmentOptions {
    double flip_probability = 0.5;
    double crop_probability = 0.5;
    double crop_fraction = 0.9;
    double rotate_probability = 0.5;
    double max_degrees = 10.0;
};

/// Drawn once per sample; every field is warped with the same plan.
struct AugmentPlan {
    bool flip = false;
    bool crop = false;
    std::size_t crop_x = 0;
    std::size_t crop_y = 0;
    std::size_t crop_width = 0;
    std::size_t crop_height = 0;
    double degrees = 0.0;
};

enum class MapKind {
    image,  // bilinear, edge clamped
    mask,   // nearest, zero outside
};

AugmentPlan plan_augmentation(std::mt19937_64& rng, std::size_t height, std::size_t width,
                              const AugmentOptions& options);

/// Flip, then crop-and-resize back, then rotation about the centre.
Tensor warp_map(const Tensor& chw, const AugmentPlan& plan, MapKind kind);

Sample apply_augmentation(const Sample& sample, const AugmentPlan& plan);
Sample augment(const Sample& sample, std::mt19937_64& rng, const AugmentOptions& options);

}  // namespace m2r
