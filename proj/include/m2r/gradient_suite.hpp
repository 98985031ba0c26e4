#pragma once
// Seeded finite-difference checks over every differentiable op and module.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace m2r {

struct GradientCheckSummary {
    std::string name;
    std::size_t trials = 0;
    double max_relative_error = 0.0;
    std::size_t checked = 0;
    std::size_t skipped = 0;
    bool passed = false;
};

struct GradientSuiteReport {
    std::vector<GradientCheckSummary> checks;
    double max_relative_error = 0.0;
    double seconds = 0.0;
    bool passed = false;
};

struct GradientSuiteOptions {
    std::uint64_t seed = 0;
    std::size_t trials = 100;
    double tolerance = 1e-4;
    /// Central-difference step.
    double step = 1e-4;
    /// Substring filter on check names; empty runs everything.
    std::string filter;
};

std::vector<std::string> gradient_check_names();

GradientSuiteReport run_gradient_suite(const GradientSuiteOptions& options, std::ostream* progress = nullptr);

}  // namespace m2r
