#pragma once
// Synthetic RGB-D saliency samples and the on-disk dataset layout
//   root/manifest.txt, root/rgb/NNNN.ppm, root/depth/NNNN.pgm, root/gt/NNNN.pgm

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "m2r/tensor.hpp"

namespace m2r {

/// rgb [3,H,W], depth [1,H,W], gt [1,H,W] binary; all values are multiples of 1/255.
struct Sample {
    Tensor rgb;
    Tensor depth;
    Tensor gt;
    std::string split;
    /// File stem on disk, e.g. "0007".
    std::string stem;
};

struct SynthOptions {
    std::size_t resolution = 64;
    /// 0 hides the object in both modalities, 1 gives full separation.
    double contrast = 1.0;
    double min_foreground = 0.05;
    double max_foreground = 0.6;
    double depth_noise = 0.02;
    double rgb_noise = 0.03;
};

/// Deterministic in (seed, index) alone.
Sample synth_sample(std::uint64_t seed, std::size_t index, const SynthOptions& options);

/// `train` samples then `test` samples, indices 0..train+test-1.
std::vector<Sample> synth_dataset(std::size_t train, std::size_t test, std::uint64_t seed, const SynthOptions& options);

void write_dataset(const std::filesystem::path& root, const std::vector<Sample>& samples);
/// Reads every sample listed in the manifest; an empty `split` keeps all.
std::vector<Sample> read_dataset(const std::filesystem::path& root, const std::string& split = "");

/// Pairs rgb_dir/<stem>.ppm with depth_dir/<stem>.pgm; gt is left empty.
std::vector<Sample> read_inputs(const std::filesystem::path& rgb_dir, const std::filesystem::path& depth_dir);

std::vector<Sample> filter_split(const std::vector<Sample>& samples, const std::string& split);

/// Stacks [C,H,W] fields of samples[indices] into [N,C,H,W].
struct Batch {
    Tensor rgb;
    Tensor depth;
    Tensor gt;
};
Batch stack_batch(const std::vector<Sample>& samples, const std::vector<std::size_t>& indices);

std::string sample_stem(std::size_t index);

}  // namespace m2r
