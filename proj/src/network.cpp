#include "m2r/network.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "m2r/error.hpp"
#include "m2r/ops.hpp"

namespace m2r {

namespace {

std::string level_name(const char* stem, std::size_t level) { return stem + std::to_string(level); }

Tensor as_batch(const Tensor& x) { return x.rank() == 3 ? unsqueeze0(x) : x; }

bool parse_flag(const std::string& v, const std::string& key) {
    if (v == "1" || v == "true") return true;
    if (v == "0" || v == "false") return false;
    throw ConfigError("network config: '" + key + "' expects 0/1, got '" + v + "'");
}

std::size_t parse_size(const std::string& v, const std::string& key) {
    try {
        std::size_t used = 0;
        const unsigned long long n = std::stoull(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return static_cast<std::size_t>(n);
    } catch (const std::exception&) {
        throw ConfigError("network config: '" + key + "' expects an unsigned integer, got '" + v + "'");
    }
}

}  // namespace

void NetworkConfig::validate() const {
    if (channels.size() != kLevels) {
        throw ConfigError("network config: expected " + std::to_string(kLevels) + " encoder widths, got " +
                          std::to_string(channels.size()));
    }
    for (std::size_t c : channels) {
        if (c == 0) throw ConfigError("network config: encoder widths must be positive");
    }
    const std::size_t stride = std::size_t{1} << (kLevels - 1);
    if (resolution == 0 || resolution % stride != 0) {
        throw ConfigError("network config: resolution " + std::to_string(resolution) + " is not a multiple of " +
                          std::to_string(stride));
    }
    if (rgb_channels == 0 || depth_channels == 0 || decoder_width == 0) {
        throw ConfigError("network config: channel counts must be positive");
    }
}

std::string NetworkConfig::serialize() const {
    std::ostringstream os;
    os << "channels=";
    for (std::size_t i = 0; i < channels.size(); ++i) os << (i ? "," : "") << channels[i];
    os << ";resolution=" << resolution << ";rgb_channels=" << rgb_channels << ";depth_channels=" << depth_channels
       << ";decoder_width=" << decoder_width << ";p1=" << modules.p1 << ";p2=" << modules.p2
       << ";i1=" << modules.i1 << ";i2=" << modules.i2 << ";deep_supervision=" << deep_supervision;
    return os.str();
}

NetworkConfig NetworkConfig::deserialize(const std::string& text) {
    NetworkConfig c;
    std::istringstream in(text);
    std::string item;
    while (std::getline(in, item, ';')) {
        const auto eq = item.find('=');
        if (eq == std::string::npos) throw ConfigError("network config: malformed entry '" + item + "'");
        const std::string key = item.substr(0, eq), value = item.substr(eq + 1);
        if (key == "channels") {
            c.channels.clear();
            std::istringstream parts(value);
            std::string p;
            while (std::getline(parts, p, ',')) c.channels.push_back(parse_size(p, key));
        } else if (key == "resolution") {
            c.resolution = parse_size(value, key);
        } else if (key == "rgb_channels") {
            c.rgb_channels = parse_size(value, key);
        } else if (key == "depth_channels") {
            c.depth_channels = parse_size(value, key);
        } else if (key == "decoder_width") {
            c.decoder_width = parse_size(value, key);
        } else if (key == "p1") {
            c.modules.p1 = parse_flag(value, key);
        } else if (key == "p2") {
            c.modules.p2 = parse_flag(value, key);
        } else if (key == "i1") {
            c.modules.i1 = parse_flag(value, key);
        } else if (key == "i2") {
            c.modules.i2 = parse_flag(value, key);
        } else if (key == "deep_supervision") {
            c.deep_supervision = parse_flag(value, key);
        } else {
            throw ConfigError("network config: unknown key '" + key + "'");
        }
    }
    c.validate();
    return c;
}

Model::Model(const NetworkConfig& config, std::uint64_t seed) : config_(config), store_(seed) {
    config_.validate();
    const auto& ch = config_.channels;
    const std::size_t D = config_.decoder_width;
    for (std::size_t i = 1; i <= kLevels; ++i) {
        const std::size_t rgb_in = i == 1 ? config_.rgb_channels : ch[i - 2];
        const std::size_t depth_in = i == 1 ? config_.depth_channels : ch[i - 2];
        rgb_encoder_.stages[i - 1] = ConvBnRelu(store_, level_name("rgb.enc", i), rgb_in, ch[i - 1], 3);
        depth_encoder_.stages[i - 1] = ConvBnRelu(store_, level_name("depth.enc", i), depth_in, ch[i - 1], 3);
    }
    const ModuleFlags& f = config_.modules;
    for (std::size_t i = 3; i <= 5; ++i) {
        if (f.p1 || f.p2) {
            NdamOptions opt;
            opt.p1 = f.p1;
            opt.p2 = f.p2;
            ndam_[i] = std::make_unique<NdamBlock>(store_, level_name("ndam", i), i, ch[i - 1], opt);
        }
        lateral_[i] = Conv2d(store_, level_name("dec.lateral", i), ch[i - 1], D, 1);
    }
    for (std::size_t i = 2; i <= 4; ++i) {
        if (f.i1 || f.i2) {
            aiam_[i] = std::make_unique<AiamBlock>(store_, level_name("aiam", i), i, ch[i - 2], ch[i - 1], ch[i],
                                                   AiamOptions{f.i1, f.i2});
        }
        refine_[i] = ConvBnRelu(store_, level_name("dec.refine", i), D, D, 3);
        align_[i] = Conv2d(store_, level_name("dec.align", i), ch[i - 1], D, 1);
        fuse_[i] = DecoderFuse(store_, level_name("dec.fuse", i), D, D, D);
    }
    final_refine_ = ConvBnRelu(store_, "dec.refine1", D + ch[0], D, 3);
    head_ = Conv2d(store_, "head", D, 1, 1);
    if (config_.deep_supervision) {
        for (std::size_t i = 2; i <= 5; ++i) side_heads_[i] = Conv2d(store_, level_name("side", i), D, 1, 1);
    }
}

std::array<Tensor, kLevels> Model::encode(const Encoder& enc, const Tensor& x, bool training) const {
    std::array<Tensor, kLevels> out;
    Tensor h = x;
    for (std::size_t i = 0; i < kLevels; ++i) {
        if (i > 0) h = max_pool2d(h, 2, 2);
        h = enc.stages[i](h, training);
        out[i] = h;
    }
    return out;
}

ModelOutput Model::forward(const Tensor& rgb_in, const Tensor& depth_in, bool training, WiringTrace* trace) const {
    const bool unbatched = rgb_in.rank() == 3;
    const Tensor rgb = as_batch(rgb_in);
    const Tensor depth = as_batch(depth_in);
    const std::size_t S = config_.resolution;
    if (rgb.rank() != 4 || rgb.dim(1) != config_.rgb_channels || rgb.dim(2) != S || rgb.dim(3) != S) {
        throw DimensionError("network input: rgb " + to_string(rgb_in.shape()) + " does not match [N," +
                             std::to_string(config_.rgb_channels) + "," + std::to_string(S) + "," +
                             std::to_string(S) + "]");
    }
    if (depth.rank() != 4 || depth.dim(0) != rgb.dim(0) || depth.dim(1) != config_.depth_channels ||
        depth.dim(2) != S || depth.dim(3) != S) {
        throw DimensionError("network input: depth " + to_string(depth_in.shape()) + " does not match rgb " +
                             to_string(rgb_in.shape()));
    }
    auto note = [&](std::string module, std::size_t level, std::vector<std::string> inputs) {
        if (trace) trace->entries.push_back({std::move(module), level, std::move(inputs)});
    };

    const auto f_rgb = encode(rgb_encoder_, rgb, training);
    const auto f_d = encode(depth_encoder_, depth, training);
    auto L = [](std::size_t i) { return i - 1; };

    std::array<Tensor, kLevels + 1> cm;
    for (std::size_t i = 3; i <= 5; ++i) {
        cm[i] = fuse_modalities(f_rgb[L(i)], f_d[L(i)]);
        if (ndam_[i]) {
            cm[i] = ndam_[i]->refine(cm[i]);
            note("ndam", i, {level_name("f_rgb", i), level_name("f_d", i)});
        }
    }
    std::array<Tensor, kLevels + 1> rgb_agg;
    for (std::size_t i = 2; i <= 4; ++i) {
        if (aiam_[i]) {
            rgb_agg[i] = aiam_[i]->forward(f_rgb[L(i - 1)], f_rgb[L(i)], f_rgb[L(i + 1)], training);
            note("aiam", i, {level_name("f_rgb", i - 1), level_name("f_rgb", i), level_name("f_rgb", i + 1)});
        } else {
            rgb_agg[i] = f_rgb[L(i)];
        }
    }

    ModelOutput out;
    const std::size_t H = rgb.dim(2), W = rgb.dim(3);
    auto side = [&](std::size_t level, const Tensor& d) {
        if (!config_.deep_supervision) return;
        out.side.push_back(sigmoid(resample(side_heads_[level](d), H, W, ResampleMode::bilinear)));
    };

    Tensor d = relu(lateral_[5](cm[5]));
    note("decoder_seed", 5, {level_name("f_cm'", 5)});
    side(5, d);
    for (std::size_t i = 4; i >= 2; --i) {
        Tensor u = upsample2(d, f_rgb[L(i)].dim(2), f_rgb[L(i)].dim(3));
        if (i >= 3) {
            u = add(u, lateral_[i](cm[i]));
            note("decoder_lateral", i, {level_name("f_cm'", i)});
        }
        const Tensor f_rgbd = refine_[i](u, training);
        d = relu(fuse_[i](f_rgbd, align_[i](rgb_agg[i])));
        note("decoder_fuse", i, {level_name("f_rgbd", i), level_name("f_rgb'", i)});
        side(i, d);
    }
    const Tensor u1 = upsample2(d, f_rgb[0].dim(2), f_rgb[0].dim(3));
    const Tensor d1 = final_refine_(concat({u1, f_rgb[0]}, 1), training);
    note("decoder_final", 1, {"f_rgbd2", "f_rgb1"});
    Tensor logits = head_(d1);
    if (logits.dim(2) != H || logits.dim(3) != W) logits = resample(logits, H, W, ResampleMode::bilinear);
    out.saliency = sigmoid(logits);
    if (unbatched) {
        auto drop = [](const Tensor& t) { return reshape(t, Shape(t.shape().begin() + 1, t.shape().end())); };
        out.saliency = drop(out.saliency);
        for (auto& s : out.side) s = drop(s);
    }
    return out;
}

QuantizedMap Model::predict(const Tensor& rgb, const Tensor& depth) const {
    if (rgb.rank() != 3 || rgb.dim(0) != config_.rgb_channels) {
        throw CodecError("predict: expected a " + std::to_string(config_.rgb_channels) + "-channel image, got " +
                             to_string(rgb.shape()),
                         0);
    }
    if (depth.rank() != 3 || depth.dim(0) != config_.depth_channels || depth.dim(1) != rgb.dim(1) ||
        depth.dim(2) != rgb.dim(2)) {
        throw CodecError("predict: depth " + to_string(depth.shape()) + " does not match rgb " +
                             to_string(rgb.shape()),
                         0);
    }
    NoGradGuard no_grad;
    const std::size_t H = rgb.dim(1), W = rgb.dim(2), S = config_.resolution;
    auto fit = [&](const Tensor& t) {
        return (t.dim(1) == S && t.dim(2) == S) ? t : resample(t, S, S, ResampleMode::bilinear);
    };
    Tensor sal = forward(fit(rgb), fit(depth), false).saliency;
    if (H != S || W != S) sal = resample(sal, H, W, ResampleMode::bilinear);
    QuantizedMap q{H, W, std::vector<std::uint8_t>(H * W)};
    const auto v = sal.values();
    for (std::size_t i = 0; i < q.values.size(); ++i) {
        q.values[i] = static_cast<std::uint8_t>(std::lround(std::clamp(v[i], 0.0, 1.0) * 255.0));
    }
    return q;
}

ArchitectureAudit Model::audit() const {
    ArchitectureAudit a;
    a.modules = config_.modules;
    a.deep_supervision = config_.deep_supervision;
    a.parameter_count = parameter_count();
    auto onoff = [](bool b) { return b ? "on" : "off"; };
    for (std::size_t i = 1; i <= kLevels; ++i) {
        std::ostringstream line;
        line << "level " << i << ": width " << config_.channels[i - 1] << ", scale 1/" << (1u << (i - 1));
        if (ndam_[i]) {
            a.ndam_levels.push_back(i);
            line << ", ndam(p1=" << onoff(ndam_[i]->options().p1) << ",p2=" << onoff(ndam_[i]->options().p2) << ")";
        }
        if (aiam_[i]) {
            a.aiam_levels.push_back(i);
            line << ", aiam(i1=" << onoff(aiam_[i]->options().i1) << ",i2=" << onoff(aiam_[i]->options().i2)
                 << ") over levels " << i - 1 << "," << i << "," << i + 1;
        }
        if (config_.deep_supervision && i >= 2) line << ", side output";
        a.lines.push_back(line.str());
    }
    a.lines.push_back("parameters: " + std::to_string(a.parameter_count));
    return a;
}

std::string ArchitectureAudit::report() const {
    std::string s;
    for (const auto& l : lines) s += l + "\n";
    return s;
}

std::string verify_wiring(const WiringTrace& trace, const ModuleFlags& flags) {
    std::vector<std::size_t> ndam, aiam;
    for (const auto& e : trace.entries) {
        if (e.module == "ndam") {
            const std::vector<std::string> want{level_name("f_rgb", e.level), level_name("f_d", e.level)};
            if (e.inputs != want) return "ndam at level " + std::to_string(e.level) + " saw the wrong features";
            ndam.push_back(e.level);
        } else if (e.module == "aiam") {
            const std::vector<std::string> want{level_name("f_rgb", e.level - 1), level_name("f_rgb", e.level),
                                                level_name("f_rgb", e.level + 1)};
            if (e.inputs != want) return "aiam at level " + std::to_string(e.level) + " saw the wrong features";
            aiam.push_back(e.level);
        }
    }
    const std::vector<std::size_t> want_ndam = (flags.p1 || flags.p2) ? std::vector<std::size_t>{3, 4, 5}
                                                                      : std::vector<std::size_t>{};
    const std::vector<std::size_t> want_aiam = (flags.i1 || flags.i2) ? std::vector<std::size_t>{2, 3, 4}
                                                                      : std::vector<std::size_t>{};
    std::sort(ndam.begin(), ndam.end());
    std::sort(aiam.begin(), aiam.end());
    if (ndam != want_ndam) return "ndam ran at an unexpected set of levels";
    if (aiam != want_aiam) return "aiam ran at an unexpected set of levels";
    return {};
}

}  // namespace m2r
