#pragma once
// Published benchmark and ablation scores, kept for formatting and comparison
// tooling. They come from full-scale training on real RGB-D benchmarks and are
// not expected from the synthetic desk runs.

#include <string_view>

namespace m2r {

std::string_view reference_benchmark_csv();
std::string_view reference_ablation_csv();

}  // namespace m2r
