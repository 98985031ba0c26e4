#pragma once
// Two-stream RGB-D encoder/decoder with nested dual attention on the fused
// levels 3-5, adjacent interactive aggregation on RGB levels 2-4 and a
// top-down decoder that fuses both back to a full-resolution saliency map.

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "m2r/aiam.hpp"
#include "m2r/ndam.hpp"
#include "m2r/nn.hpp"
#include "m2r/tensor.hpp"

namespace m2r {

inline constexpr std::size_t kLevels = 5;

struct ModuleFlags {
    bool p1 = true;
    bool p2 = true;
    bool i1 = true;
    bool i2 = true;
};

struct NetworkConfig {
    /// Encoder widths of levels 1..5; level i runs at resolution / 2^(i-1).
    std::vector<std::size_t> channels{16, 32, 64, 96, 128};
    /// Square input side; must be a multiple of 16.
    std::size_t resolution = 64;
    std::size_t rgb_channels = 3;
    std::size_t depth_channels = 1;
    std::size_t decoder_width = 16;
    ModuleFlags modules;
    bool deep_supervision = false;

    /// Throws ConfigError.
    void validate() const;
    /// Single-line `key=value;...` form, stored in checkpoints.
    std::string serialize() const;
    static NetworkConfig deserialize(const std::string& text);
};

struct ModelOutput {
    Tensor saliency;           // [N,1,H,W] (or [1,H,W] for unbatched input)
    std::vector<Tensor> side;  // levels 5..2 when deep supervision is on
};

/// Which module consumed which feature level during one forward pass.
struct WiringTrace {
    struct Entry {
        std::string module;
        std::size_t level;
        std::vector<std::string> inputs;
    };
    std::vector<Entry> entries;
};

struct ArchitectureAudit {
    std::vector<std::size_t> ndam_levels;
    std::vector<std::size_t> aiam_levels;
    ModuleFlags modules;
    bool deep_supervision = false;
    std::size_t parameter_count = 0;
    /// One line per level and module, stable across runs.
    std::vector<std::string> lines;
    std::string report() const;
};

/// Checks that NDAM ran on exactly the fused levels 3-5, AIAM on RGB triples
/// centred at 2-4, and nothing else. Returns an empty string when the wiring
/// is as declared, otherwise the first violation.
std::string verify_wiring(const WiringTrace& trace, const ModuleFlags& flags);

struct QuantizedMap {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> values;
};

class Model {
public:
    Model(const NetworkConfig& config, std::uint64_t seed);

    const NetworkConfig& config() const { return config_; }
    ParameterStore& store() { return store_; }
    const ParameterStore& store() const { return store_; }
    std::size_t parameter_count() const { return store_.scalar_count(); }

    /// rgb [N,3,S,S], depth [N,1,S,S] (or unbatched). Training mode uses batch
    /// statistics and updates the running estimates.
    ModelOutput forward(const Tensor& rgb, const Tensor& depth, bool training, WiringTrace* trace = nullptr) const;

    /// Any input size: resized to the configured resolution, run in eval
    /// mode, resized back and quantized to 0..255.
    QuantizedMap predict(const Tensor& rgb, const Tensor& depth) const;

    ArchitectureAudit audit() const;

private:
    struct Encoder {
        std::array<ConvBnRelu, kLevels> stages;
    };
    std::array<Tensor, kLevels> encode(const Encoder& enc, const Tensor& x, bool training) const;

    NetworkConfig config_;
    ParameterStore store_;
    Encoder rgb_encoder_, depth_encoder_;
    std::array<std::unique_ptr<NdamBlock>, kLevels + 1> ndam_;  // indexed by level
    std::array<std::unique_ptr<AiamBlock>, kLevels + 1> aiam_;
    std::array<Conv2d, kLevels + 1> lateral_;
    std::array<ConvBnRelu, kLevels + 1> refine_;
    std::array<Conv2d, kLevels + 1> align_;
    std::array<DecoderFuse, kLevels + 1> fuse_;
    ConvBnRelu final_refine_;
    Conv2d head_;
    std::array<Conv2d, kLevels + 1> side_heads_;
};

}  // namespace m2r
