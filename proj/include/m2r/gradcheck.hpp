#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "m2r/tensor.hpp"

namespace m2r {

enum class Stencil {
    /// (f(x+h) - f(x-h)) / 2h
    three_point,
    /// (-f(x+2h) + 8 f(x+h) - 8 f(x-h) + f(x-2h)) / 12h
    five_point,
};

struct GradcheckOptions {
    double step = 1e-4;
    Stencil stencil = Stencil::five_point;
    /// Relative error is |a - n| / max(|a|, |n|, floor); the floor only
    /// matters for gradients that are zero to within round-off.
    double denominator_floor = 1e-6;
    /// 0 checks every coordinate, otherwise a seeded random subset.
    std::size_t max_coordinates = 0;
    std::uint64_t seed = 0;
};

struct GradcheckResult {
    std::string name;
    double max_relative_error = 0.0;
    std::size_t checked = 0;
    /// Coordinates whose +-step perturbation crossed a ReLU/max/clamp kink.
    std::size_t skipped = 0;
    /// Coordinate with the largest relative error.
    std::size_t worst_input = 0;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
};

/// Compares backward() against central differences of `loss_fn` with respect
/// to every tensor in `inputs` (leaves with requires_grad set). `loss_fn`
/// must be deterministic in the current input values.
GradcheckResult check_gradients(const std::function<Tensor()>& loss_fn, const std::vector<Tensor>& inputs,
                                const GradcheckOptions& options = {});

/// sum(x * weights) with fixed weights; turns any tensor into a scalar with a
/// generic, non-degenerate upstream gradient.
Tensor projection_loss(const Tensor& x, const Tensor& weights);

}  // namespace m2r
