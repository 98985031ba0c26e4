#include "m2r/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

#include "m2r/error.hpp"

namespace m2r {

namespace {

class HeaderParser {
public:
    explicit HeaderParser(const std::vector<std::uint8_t>& b) : b_(b) {}

    void skip_space_and_comments() {
        while (pos_ < b_.size()) {
            if (b_[pos_] == '#') {
                while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
            } else if (std::isspace(b_[pos_])) {
                ++pos_;
            } else {
                return;
            }
        }
    }

    std::size_t number(const char* what) {
        skip_space_and_comments();
        const std::size_t start = pos_;
        std::size_t v = 0;
        while (pos_ < b_.size() && std::isdigit(b_[pos_])) {
            v = v * 10 + static_cast<std::size_t>(b_[pos_] - '0');
            if (v > (std::size_t{1} << 24)) throw CodecError(std::string("netpbm ") + what + " too large", start);
            ++pos_;
        }
        if (pos_ == start) throw CodecError(std::string("netpbm header: expected ") + what, start);
        return v;
    }

    std::size_t pos() const { return pos_; }
    void advance() { ++pos_; }
    bool at_space() const { return pos_ < b_.size() && std::isspace(b_[pos_]); }

private:
    const std::vector<std::uint8_t>& b_;
    std::size_t pos_ = 0;
};

}  // namespace

Image decode_netpbm(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 2 || bytes[0] != 'P') throw CodecError("not a netpbm file", 0);
    Image img;
    switch (bytes[1]) {
        case '5': img.channels = 1; break;
        case '6': img.channels = 3; break;
        case '2':
        case '3': throw CodecError("ASCII netpbm (P2/P3) is not supported; use binary P5/P6", 1);
        default: throw CodecError("unsupported netpbm magic", 1);
    }
    HeaderParser h(bytes);
    h.advance();
    h.advance();
    img.width = h.number("width");
    img.height = h.number("height");
    const std::size_t maxval_at = h.pos();
    const std::size_t maxval = h.number("maxval");
    if (maxval != 255) throw CodecError("netpbm maxval must be 255, got " + std::to_string(maxval), maxval_at);
    if (img.width == 0 || img.height == 0) throw CodecError("netpbm image has zero size", maxval_at);
    if (!h.at_space()) throw CodecError("netpbm header: missing whitespace before pixel data", h.pos());
    h.advance();
    const std::size_t need = img.width * img.height * img.channels;
    if (bytes.size() - h.pos() < need) {
        throw CodecError("netpbm pixel data truncated: need " + std::to_string(need) + " bytes, have " +
                             std::to_string(bytes.size() - h.pos()),
                         bytes.size());
    }
    img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(h.pos()),
                      bytes.begin() + static_cast<std::ptrdiff_t>(h.pos() + need));
    return img;
}

std::vector<std::uint8_t> encode_netpbm(const Image& image) {
    if (image.channels != 1 && image.channels != 3) {
        throw CodecError("netpbm encoding needs 1 or 3 channels, got " + std::to_string(image.channels), 0);
    }
    if (image.pixels.size() != image.width * image.height * image.channels) {
        throw ContractError("image pixel buffer does not match its dimensions");
    }
    const std::string header = std::string(image.channels == 1 ? "P5" : "P6") + "\n" + std::to_string(image.width) +
                               " " + std::to_string(image.height) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.insert(out.end(), image.pixels.begin(), image.pixels.end());
    return out;
}

Image read_image(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open image " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return decode_netpbm(bytes);
    } catch (const CodecError& e) {
        std::string what = e.what();
        what.resize(what.rfind(" (at byte "));
        throw CodecError(path.string() + ": " + what, e.offset());
    }
}

void write_image(const std::filesystem::path& path, const Image& image) {
    const auto bytes = encode_netpbm(image);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write image " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing image " + path.string());
}

Tensor image_to_tensor(const Image& image) {
    const std::size_t C = image.channels, H = image.height, W = image.width;
    std::vector<double> v(C * H * W);
    for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x)
            for (std::size_t c = 0; c < C; ++c) v[(c * H + y) * W + x] = image.pixels[(y * W + x) * C + c] / 255.0;
    return Tensor::from_values({C, H, W}, std::move(v));
}

Image tensor_to_image(const Tensor& chw) {
    if (chw.rank() != 3) throw DimensionError("tensor_to_image: expected [C,H,W], got " + to_string(chw.shape()));
    Image img;
    img.channels = chw.dim(0);
    img.height = chw.dim(1);
    img.width = chw.dim(2);
    img.pixels.resize(chw.numel());
    const auto v = chw.values();
    const std::size_t C = img.channels, H = img.height, W = img.width;
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x) {
                const double s = std::clamp(v[(c * H + y) * W + x], 0.0, 1.0);
                img.pixels[(y * W + x) * C + c] = static_cast<std::uint8_t>(std::lround(s * 255.0));
            }
    return img;
}

}  // namespace m2r
