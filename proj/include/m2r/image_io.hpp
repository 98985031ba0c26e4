#pragma once
// Binary netpbm codecs: P6 (RGB) and P5 (grayscale), maxval 255 only.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "m2r/tensor.hpp"

namespace m2r {

/// 8-bit image, interleaved channels (1 or 3), row-major.
struct Image {
    std::size_t width = 0;
    std::size_t height = 0;
    std::size_t channels = 0;
    std::vector<std::uint8_t> pixels;
};

/// Throws CodecError with the byte offset of the first problem.
Image decode_netpbm(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode_netpbm(const Image& image);

Image read_image(const std::filesystem::path& path);
/// 1 channel -> P5, 3 channels -> P6.
void write_image(const std::filesystem::path& path, const Image& image);

/// [C,H,W] with values v / 255.
Tensor image_to_tensor(const Image& image);
/// Inverse of image_to_tensor: clamps to [0,1] and rounds to the nearest level.
Image tensor_to_image(const Tensor& chw);

}  // namespace m2r
