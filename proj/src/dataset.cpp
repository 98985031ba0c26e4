#include "m2r/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>

#include "m2r/error.hpp"
#include "m2r/image_io.hpp"

namespace m2r {

namespace {

enum class ShapeType { rect, ellipse, triangle };

struct Blob {
    ShapeType type;
    double cx, cy, rx, ry;
    std::array<double, 6> tri;  // x0 y0 x1 y1 x2 y2
    double depth_level;

    bool contains(double x, double y) const {
        switch (type) {
            case ShapeType::rect: return std::abs(x - cx) <= rx && std::abs(y - cy) <= ry;
            case ShapeType::ellipse: {
                const double u = (x - cx) / rx, v = (y - cy) / ry;
                return u * u + v * v <= 1.0;
            }
            case ShapeType::triangle: {
                auto edge = [&](int a, int b) {
                    return (tri[2 * b] - tri[2 * a]) * (y - tri[2 * a + 1]) -
                           (tri[2 * b + 1] - tri[2 * a + 1]) * (x - tri[2 * a]);
                };
                const double e0 = edge(0, 1), e1 = edge(1, 2), e2 = edge(2, 0);
                return (e0 >= 0 && e1 >= 0 && e2 >= 0) || (e0 <= 0 && e1 <= 0 && e2 <= 0);
            }
        }
        return false;
    }
};

std::mt19937_64 sample_rng(std::uint64_t seed, std::size_t index) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(std::uint64_t{index} >> 32),
                      0x5eedu};
    return std::mt19937_64(seq);
}

Blob random_blob(std::mt19937_64& rng, double size) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Blob b{};
    b.type = static_cast<ShapeType>(rng() % 3);
    b.cx = size * (0.15 + 0.7 * u(rng));
    b.cy = size * (0.15 + 0.7 * u(rng));
    b.rx = size * (0.08 + 0.25 * u(rng));
    b.ry = size * (0.08 + 0.25 * u(rng));
    for (int k = 0; k < 3; ++k) {
        const double a = 2.0 * std::numbers::pi * (k + 0.6 * u(rng)) / 3.0;
        b.tri[2 * k] = b.cx + b.rx * 1.4 * std::cos(a);
        b.tri[2 * k + 1] = b.cy + b.ry * 1.4 * std::sin(a);
    }
    b.depth_level = 0.12 + 0.2 * u(rng);
    return b;
}

double quantize(double v) { return std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0; }

}  // namespace

std::string sample_stem(std::size_t index) {
    std::ostringstream s;
    s << std::setw(4) << std::setfill('0') << index;
    return s.str();
}

Sample synth_sample(std::uint64_t seed, std::size_t index, const SynthOptions& options) {
    const std::size_t R = options.resolution;
    if (R == 0) throw ConfigError("synthetic resolution must be positive");
    if (options.contrast < 0.0 || options.contrast > 1.0) throw ConfigError("contrast must lie in [0, 1]");
    auto rng = sample_rng(seed, index);
    std::uniform_real_distribution<double> u(0.0, 1.0);

    std::vector<Blob> blobs;
    std::vector<int> owner(R * R, -1);
    bool accepted = false;
    for (int attempt = 0; attempt < 500 && !accepted; ++attempt) {
        blobs.clear();
        const std::size_t count = 1 + rng() % 3;
        for (std::size_t k = 0; k < count; ++k) blobs.push_back(random_blob(rng, static_cast<double>(R)));
        std::size_t fg = 0;
        for (std::size_t y = 0; y < R; ++y)
            for (std::size_t x = 0; x < R; ++x) {
                int o = -1;
                for (std::size_t k = 0; k < blobs.size(); ++k)
                    if (blobs[k].contains(x + 0.5, y + 0.5)) o = static_cast<int>(k);
                owner[y * R + x] = o;
                fg += o >= 0;
            }
        const double frac = static_cast<double>(fg) / static_cast<double>(R * R);
        accepted = frac >= options.min_foreground && frac <= options.max_foreground;
    }
    if (!accepted) throw ContractError("could not place a foreground within the requested area fraction");

    std::array<double, 3> bg_color{}, fg_color{};
    for (int c = 0; c < 3; ++c) {
        bg_color[c] = 0.15 + 0.7 * u(rng);
        const double delta = 0.3 + 0.2 * u(rng);
        const double dir = bg_color[c] < 0.5 ? 1.0 : -1.0;
        fg_color[c] = bg_color[c] + dir * options.contrast * delta;
    }
    const double bg_freq_x = 0.2 + 0.4 * u(rng), bg_freq_y = 0.2 + 0.4 * u(rng), bg_phase = 6.28 * u(rng);
    const double fg_freq = 0.5 + 0.5 * u(rng), fg_phase = 6.28 * u(rng);
    const double depth_base = 0.65 + 0.15 * u(rng);
    const double gx = u(rng) - 0.5, gy = u(rng) - 0.5;
    std::normal_distribution<double> rgb_noise(0.0, options.rgb_noise), depth_noise(0.0, options.depth_noise);

    std::vector<double> rgb(3 * R * R), depth(R * R), gt(R * R);
    for (std::size_t y = 0; y < R; ++y)
        for (std::size_t x = 0; x < R; ++x) {
            const std::size_t i = y * R + x;
            const int o = owner[i];
            const double fx = static_cast<double>(x) / R - 0.5, fy = static_cast<double>(y) / R - 0.5;
            const double bg_depth = depth_base + 0.3 * (gx * fx + gy * fy);
            double d = bg_depth;
            double tex = 0.06 * std::sin(bg_freq_x * x + bg_freq_y * y + bg_phase);
            const std::array<double, 3>* color = &bg_color;
            if (o >= 0) {
                d = bg_depth + options.contrast * (blobs[o].depth_level - bg_depth);
                tex = 0.06 * std::sin(fg_freq * (x + y) + fg_phase);
                color = &fg_color;
                gt[i] = 1.0;
            }
            depth[i] = quantize(d + depth_noise(rng));
            for (int c = 0; c < 3; ++c) rgb[c * R * R + i] = quantize((*color)[c] + tex + rgb_noise(rng));
        }
    return {Tensor::from_values({3, R, R}, std::move(rgb)), Tensor::from_values({1, R, R}, std::move(depth)),
            Tensor::from_values({1, R, R}, std::move(gt)), "", sample_stem(index)};
}

std::vector<Sample> synth_dataset(std::size_t train, std::size_t test, std::uint64_t seed,
                                  const SynthOptions& options) {
    std::vector<Sample> out;
    out.reserve(train + test);
    for (std::size_t i = 0; i < train + test; ++i) {
        out.push_back(synth_sample(seed, i, options));
        out.back().split = i < train ? "train" : "test";
        out.back().stem = sample_stem(i);
    }
    return out;
}

void write_dataset(const std::filesystem::path& root, const std::vector<Sample>& samples) {
    std::error_code ec;
    for (const char* sub : {"rgb", "depth", "gt"}) {
        std::filesystem::create_directories(root / sub, ec);
        if (ec) throw IoError("cannot create " + (root / sub).string() + ": " + ec.message());
    }
    std::ofstream manifest(root / "manifest.txt", std::ios::trunc);
    if (!manifest) throw IoError("cannot write " + (root / "manifest.txt").string());
    manifest << "# m2rnet dataset v1\n";
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto stem = samples[i].stem.empty() ? sample_stem(i) : samples[i].stem;
        write_image(root / "rgb" / (stem + ".ppm"), tensor_to_image(samples[i].rgb));
        write_image(root / "depth" / (stem + ".pgm"), tensor_to_image(samples[i].depth));
        write_image(root / "gt" / (stem + ".pgm"), tensor_to_image(samples[i].gt));
        manifest << stem << ' ' << (samples[i].split.empty() ? "all" : samples[i].split) << '\n';
    }
    if (!manifest) throw IoError("failed writing manifest in " + root.string());
}

std::vector<Sample> read_dataset(const std::filesystem::path& root, const std::string& split) {
    std::ifstream manifest(root / "manifest.txt");
    if (!manifest) throw IoError("cannot open " + (root / "manifest.txt").string());
    std::vector<Sample> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(manifest, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream fields(line);
        std::string stem, which;
        if (!(fields >> stem >> which)) {
            throw ConfigError("manifest line " + std::to_string(line_no) + ": expected '<stem> <split>'");
        }
        if (!split.empty() && which != split) continue;
        Sample s;
        s.rgb = image_to_tensor(read_image(root / "rgb" / (stem + ".ppm")));
        s.depth = image_to_tensor(read_image(root / "depth" / (stem + ".pgm")));
        s.gt = image_to_tensor(read_image(root / "gt" / (stem + ".pgm")));
        if (s.rgb.dim(0) != 3 || s.depth.dim(0) != 1 || s.gt.dim(0) != 1) {
            throw CodecError("sample " + stem + ": expected RGB .ppm and grayscale .pgm files", 0);
        }
        if (s.rgb.dim(1) != s.depth.dim(1) || s.rgb.dim(2) != s.depth.dim(2) || s.rgb.dim(1) != s.gt.dim(1) ||
            s.rgb.dim(2) != s.gt.dim(2)) {
            throw DimensionError("sample " + stem + ": rgb, depth and gt sizes differ");
        }
        s.split = which;
        s.stem = stem;
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<Sample> read_inputs(const std::filesystem::path& rgb_dir, const std::filesystem::path& depth_dir) {
    if (!std::filesystem::is_directory(rgb_dir)) throw IoError("not a directory: " + rgb_dir.string());
    std::vector<std::string> stems;
    for (const auto& entry : std::filesystem::directory_iterator(rgb_dir))
        if (entry.path().extension() == ".ppm") stems.push_back(entry.path().stem().string());
    std::sort(stems.begin(), stems.end());
    if (stems.empty()) throw IoError("no .ppm images in " + rgb_dir.string());
    std::vector<Sample> out;
    for (const auto& stem : stems) {
        Sample s;
        s.rgb = image_to_tensor(read_image(rgb_dir / (stem + ".ppm")));
        s.depth = image_to_tensor(read_image(depth_dir / (stem + ".pgm")));
        if (s.rgb.dim(0) != 3 || s.depth.dim(0) != 1) {
            throw CodecError("input " + stem + ": expected RGB .ppm and grayscale .pgm files", 0);
        }
        s.stem = stem;
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<Sample> filter_split(const std::vector<Sample>& samples, const std::string& split) {
    std::vector<Sample> out;
    for (const auto& s : samples)
        if (s.split == split) out.push_back(s);
    return out;
}

Batch stack_batch(const std::vector<Sample>& samples, const std::vector<std::size_t>& indices) {
    if (indices.empty()) throw ContractError("stack_batch: empty batch");
    auto stack = [&](auto field) {
        const Shape s0 = (samples[indices[0]].*field).shape();
        std::vector<double> v;
        v.reserve(indices.size() * numel(s0));
        for (auto i : indices) {
            const Tensor& t = samples.at(i).*field;
            if (t.shape() != s0) throw DimensionError("stack_batch: samples differ in shape");
            v.insert(v.end(), t.values().begin(), t.values().end());
        }
        return Tensor::from_values({indices.size(), s0[0], s0[1], s0[2]}, std::move(v));
    };
    return {stack(&Sample::rgb), stack(&Sample::depth), stack(&Sample::gt)};
}

}  // namespace m2r
