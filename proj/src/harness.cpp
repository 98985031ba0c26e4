#include "m2r/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

#include "m2r/error.hpp"
#include "m2r/image_io.hpp"
#include "m2r/ops.hpp"
#include "m2r/reference.hpp"

namespace m2r {

namespace {

std::string fmt(double v) {
    std::ostringstream s;
    s << std::setprecision(12) << v;
    return s.str();
}

std::string join(const std::vector<std::size_t>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
    return out;
}

std::vector<std::size_t> shuffled(std::size_t n, std::mt19937_64& rng) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
    return order;
}

std::vector<SaliencyPair> side_pairs(const ModelOutput& out, const Tensor& gt) {
    std::vector<SaliencyPair> sides;
    for (const auto& s : out.side) sides.push_back({s, gt});
    return sides;
}

}  // namespace

void TrainConfig::validate() const {
    if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
    if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
    if (train_samples < 1) throw ConfigError("train_samples must be at least 1");
    if (!(contrast >= 0.0 && contrast <= 1.0)) throw ConfigError("contrast must lie in [0, 1]");
    for (double p : {augment_options.flip_probability, augment_options.crop_probability,
                     augment_options.rotate_probability}) {
        if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("augmentation probabilities must lie in [0, 1]");
    }
    if (!(augment_options.crop_fraction > 0.0 && augment_options.crop_fraction <= 1.0)) {
        throw ConfigError("crop_fraction must lie in (0, 1]");
    }
    loss.validate();
    network.validate();
}

SynthOptions TrainConfig::synth_options() const {
    SynthOptions o;
    o.resolution = network.resolution;
    o.contrast = contrast;
    return o;
}

TrainConfig train_config_from(const Settings& s) {
    static const std::set<std::string> known{
        "seed", "data_seed", "epochs", "batch_size", "learning_rate", "momentum", "weight_decay", "train_samples",
        "test_samples", "contrast", "augment", "flip_probability", "crop_probability", "crop_fraction",
        "rotate_probability", "max_degrees", "resolution", "channels", "decoder_width", "deep_supervision", "p1", "p2",
        "i1", "i2", "lambda1", "lambda2", "lambda3", "lambda4", "mu", "eps", "bce_reduction", "l4_complement",
        "ablation_seeds", "ablation_schemes"};
    for (const auto& [key, value] : s.entries()) {
        if (!known.count(key)) throw ConfigError("unknown config key '" + key + "'");
    }
    TrainConfig c;
    auto opt_uint = [&](const char* k, auto& field) {
        if (s.has(k)) field = static_cast<std::remove_reference_t<decltype(field)>>(s.get_uint(k));
    };
    auto opt_double = [&](const char* k, double& field) {
        if (s.has(k)) field = s.get_double(k);
    };
    auto opt_bool = [&](const char* k, bool& field) {
        if (s.has(k)) field = s.get_bool(k);
    };
    opt_uint("seed", c.seed);
    opt_uint("data_seed", c.data_seed);
    opt_uint("epochs", c.epochs);
    opt_uint("batch_size", c.batch_size);
    opt_double("learning_rate", c.learning_rate);
    opt_double("momentum", c.momentum);
    opt_double("weight_decay", c.weight_decay);
    opt_uint("train_samples", c.train_samples);
    opt_uint("test_samples", c.test_samples);
    opt_double("contrast", c.contrast);
    opt_bool("augment", c.augment);
    opt_double("flip_probability", c.augment_options.flip_probability);
    opt_double("crop_probability", c.augment_options.crop_probability);
    opt_double("crop_fraction", c.augment_options.crop_fraction);
    opt_double("rotate_probability", c.augment_options.rotate_probability);
    opt_double("max_degrees", c.augment_options.max_degrees);
    opt_uint("resolution", c.network.resolution);
    if (s.has("channels")) c.network.channels = s.get_uint_list("channels");
    opt_uint("decoder_width", c.network.decoder_width);
    opt_bool("deep_supervision", c.network.deep_supervision);
    opt_bool("p1", c.network.modules.p1);
    opt_bool("p2", c.network.modules.p2);
    opt_bool("i1", c.network.modules.i1);
    opt_bool("i2", c.network.modules.i2);
    opt_double("lambda1", c.loss.lambda1);
    opt_double("lambda2", c.loss.lambda2);
    opt_double("lambda3", c.loss.lambda3);
    opt_double("lambda4", c.loss.lambda4);
    opt_double("mu", c.loss.mu);
    opt_double("eps", c.loss.eps);
    opt_bool("l4_complement", c.loss.l4_complement);
    if (s.has("bce_reduction")) {
        const auto r = s.get_string("bce_reduction");
        if (r == "mean") {
            c.loss.bce_reduction = BceReduction::mean;
        } else if (r == "sum") {
            c.loss.bce_reduction = BceReduction::sum;
        } else {
            throw ConfigError("bce_reduction must be 'mean' or 'sum'");
        }
    }
    c.validate();
    return c;
}

std::string to_settings_text(const TrainConfig& c) {
    std::ostringstream o;
    auto b = [](bool v) { return v ? "true" : "false"; };
    o << "seed = " << c.seed << "\ndata_seed = " << c.data_seed << "\nepochs = " << c.epochs
      << "\nbatch_size = " << c.batch_size << "\nlearning_rate = " << fmt(c.learning_rate)
      << "\nmomentum = " << fmt(c.momentum) << "\nweight_decay = " << fmt(c.weight_decay)
      << "\ntrain_samples = " << c.train_samples << "\ntest_samples = " << c.test_samples
      << "\ncontrast = " << fmt(c.contrast) << "\naugment = " << b(c.augment)
      << "\nflip_probability = " << fmt(c.augment_options.flip_probability)
      << "\ncrop_probability = " << fmt(c.augment_options.crop_probability)
      << "\ncrop_fraction = " << fmt(c.augment_options.crop_fraction)
      << "\nrotate_probability = " << fmt(c.augment_options.rotate_probability)
      << "\nmax_degrees = " << fmt(c.augment_options.max_degrees) << "\nresolution = " << c.network.resolution
      << "\nchannels = " << join(c.network.channels) << "\ndecoder_width = " << c.network.decoder_width
      << "\ndeep_supervision = " << b(c.network.deep_supervision) << "\np1 = " << b(c.network.modules.p1)
      << "\np2 = " << b(c.network.modules.p2) << "\ni1 = " << b(c.network.modules.i1)
      << "\ni2 = " << b(c.network.modules.i2) << "\nlambda1 = " << fmt(c.loss.lambda1)
      << "\nlambda2 = " << fmt(c.loss.lambda2) << "\nlambda3 = " << fmt(c.loss.lambda3)
      << "\nlambda4 = " << fmt(c.loss.lambda4) << "\nmu = " << fmt(c.loss.mu) << "\neps = " << fmt(c.loss.eps)
      << "\nbce_reduction = " << (c.loss.bce_reduction == BceReduction::mean ? "mean" : "sum")
      << "\nl4_complement = " << b(c.loss.l4_complement) << "\n";
    return o.str();
}

std::string objective_label(const LossConfig& loss) {
    const double lambdas[4] = {loss.lambda1, loss.lambda2, loss.lambda3, loss.lambda4};
    std::string terms;
    for (int k = 0; k < 4; ++k) {
        if (lambdas[k] == 0.0) continue;
        if (!terms.empty()) terms += ",";
        terms += "l" + std::to_string(k + 1) + (k == 3 && loss.l4_complement ? "c" : "") + ":" + fmt(lambdas[k]);
    }
    if (loss.mu == 0.0 || terms.empty()) return "bce";
    return "bce+" + fmt(loss.mu) + "*jhol[" + terms + "]";
}

std::string TrainLog::csv() const {
    std::ostringstream o;
    o << "# m2rnet train log v1\nepoch,train_loss,val_mae,objective\n";
    for (const auto& e : epochs) o << e.epoch << ',' << fmt(e.train_loss) << ',' << fmt(e.val_mae) << ',' << objective << '\n';
    return o.str();
}

double dataset_loss(Model& model, const std::vector<Sample>& samples, const LossConfig& loss, std::size_t batch_size) {
    if (samples.empty()) throw ContractError("dataset_loss: no samples");
    std::vector<std::vector<double>> saved;
    for (const auto& b : model.store().buffers()) saved.push_back(b->values);
    NoGradGuard no_grad;
    double total = 0.0;
    for (std::size_t start = 0; start < samples.size(); start += batch_size) {
        std::vector<std::size_t> idx;
        for (std::size_t i = start; i < std::min(samples.size(), start + batch_size); ++i) idx.push_back(i);
        const Batch batch = stack_batch(samples, idx);
        const ModelOutput out = model.forward(batch.rgb, batch.depth, true);
        total += total_loss({out.saliency, batch.gt}, side_pairs(out, batch.gt), loss).item() *
                 static_cast<double>(idx.size());
    }
    for (std::size_t i = 0; i < saved.size(); ++i) model.store().buffers()[i]->values = saved[i];
    return total / static_cast<double>(samples.size());
}

double validation_mae(const Model& model, const std::vector<Sample>& samples, std::size_t batch_size) {
    if (samples.empty()) return 0.0;
    NoGradGuard no_grad;
    double total = 0.0;
    for (std::size_t start = 0; start < samples.size(); start += batch_size) {
        std::vector<std::size_t> idx;
        for (std::size_t i = start; i < std::min(samples.size(), start + batch_size); ++i) idx.push_back(i);
        const Batch batch = stack_batch(samples, idx);
        const Tensor pred = model.forward(batch.rgb, batch.depth, false).saliency;
        const auto p = pred.values(), g = batch.gt.values();
        const std::size_t per = p.size() / idx.size();
        for (std::size_t n = 0; n < idx.size(); ++n) {
            double s = 0.0;
            for (std::size_t k = n * per; k < (n + 1) * per; ++k) s += std::abs(p[k] - g[k]);
            total += s / static_cast<double>(per);
        }
    }
    return total / static_cast<double>(samples.size());
}

TrainResult train(const TrainConfig& config, const std::vector<Sample>& train_set, const std::vector<Sample>& val_set,
                  std::ostream* progress) {
    config.validate();
    if (train_set.empty()) throw ContractError("train: empty training set");
    TrainResult result;
    result.model = std::make_unique<Model>(config.network, config.seed);
    Model& model = *result.model;
    result.log.objective = objective_label(config.loss);
    std::mt19937_64 rng(config.seed ^ 0x7261696e5f726e67ull);

    auto record = [&](std::size_t epoch, double loss) {
        result.log.epochs.push_back({epoch, loss, validation_mae(model, val_set)});
        if (progress) {
            *progress << "epoch " << epoch << "  train_loss " << fmt(loss) << "  val_mae "
                      << fmt(result.log.epochs.back().val_mae) << std::endl;
        }
    };
    record(0, dataset_loss(model, train_set, config.loss, config.batch_size));

    const SgdOptions sgd{config.learning_rate, config.momentum, config.weight_decay};
    std::size_t step = 0;
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        const auto order = shuffled(train_set.size(), rng);
        double sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            std::vector<Sample> items;
            for (std::size_t i = start; i < std::min(order.size(), start + config.batch_size); ++i) {
                const Sample& s = train_set[order[i]];
                items.push_back(config.augment ? augment(s, rng, config.augment_options) : s);
            }
            std::vector<std::size_t> idx(items.size());
            std::iota(idx.begin(), idx.end(), 0);
            const Batch batch = stack_batch(items, idx);
            const ModelOutput out = model.forward(batch.rgb, batch.depth, true);
            const Tensor loss = total_loss({out.saliency, batch.gt}, side_pairs(out, batch.gt), config.loss);
            const double value = loss.item();
            if (!std::isfinite(value)) throw DivergenceError("training loss is not finite", step);
            backward(loss);
            sgd_step(model.store().parameters(), sgd);
            ++step;
            sum += value * static_cast<double>(items.size());
        }
        record(epoch, sum / static_cast<double>(train_set.size()));
    }
    return result;
}

GrayMap to_gray_map(const Tensor& chw) {
    if (chw.rank() != 3 || chw.dim(0) != 1) throw DimensionError("to_gray_map: expected [1,H,W], got " + to_string(chw.shape()));
    return GrayMap(chw.dim(1), chw.dim(2), std::vector<double>(chw.values().begin(), chw.values().end()));
}

GrayMap to_gray_map(const QuantizedMap& map) {
    std::vector<double> v(map.values.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = map.values[i] / 255.0;
    return GrayMap(map.height, map.width, std::move(v));
}

MetricsReport evaluate_model(const Model& model, const std::vector<Sample>& samples) {
    if (samples.empty()) throw ContractError("evaluate_model: no samples");
    std::vector<MapPair> pairs;
    pairs.reserve(samples.size());
    for (const auto& s : samples) pairs.push_back({to_gray_map(model.predict(s.rgb, s.depth)), to_gray_map(s.gt)});
    return evaluate_dataset(pairs);
}

MetricsReport evaluate_directories(const std::filesystem::path& pred_dir, const std::filesystem::path& gt_dir) {
    if (!std::filesystem::is_directory(pred_dir)) throw IoError("not a directory: " + pred_dir.string());
    if (!std::filesystem::is_directory(gt_dir)) throw IoError("not a directory: " + gt_dir.string());
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(pred_dir))
        if (entry.path().extension() == ".pgm") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw IoError("no .pgm maps in " + pred_dir.string());
    std::vector<MapPair> pairs;
    for (const auto& f : files) {
        const auto gt_path = gt_dir / f.filename();
        if (!std::filesystem::exists(gt_path)) throw IoError("missing ground truth " + gt_path.string());
        const Image pred = read_image(f), gt = read_image(gt_path);
        if (pred.channels != 1 || gt.channels != 1) throw CodecError(f.filename().string() + ": maps must be grayscale P5", 0);
        pairs.push_back({to_gray_map(image_to_tensor(pred)), to_gray_map(image_to_tensor(gt))});
    }
    return evaluate_dataset(pairs);
}

void write_predictions(const Model& model, const std::vector<Sample>& samples, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const QuantizedMap q = model.predict(samples[i].rgb, samples[i].depth);
        const std::string stem = samples[i].stem.empty() ? sample_stem(i) : samples[i].stem;
        write_image(dir / (stem + ".pgm"), Image{q.width, q.height, 1, q.values});
    }
}

const std::vector<AblationScheme>& ablation_schemes() {
    static const std::vector<AblationScheme> schemes = [] {
        std::vector<AblationScheme> out;
        std::istringstream in{std::string(reference_ablation_csv())};
        std::string line;
        std::getline(in, line);  // comment
        std::getline(in, line);  // header
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            std::istringstream cells(line);
            std::string cell;
            std::vector<std::string> v;
            while (std::getline(cells, cell, ',')) v.push_back(cell);
            AblationScheme s;
            s.id = std::stoi(v.at(0));
            bool* flags[8] = {&s.p1, &s.p2, &s.i1, &s.i2, &s.l1, &s.l2, &s.l3, &s.l4};
            for (int k = 0; k < 8; ++k) *flags[k] = v.at(1 + k) == "1";
            out.push_back(s);
        }
        return out;
    }();
    return schemes;
}

const AblationScheme& ablation_scheme(int id) {
    for (const auto& s : ablation_schemes())
        if (s.id == id) return s;
    throw ConfigError("no ablation scheme " + std::to_string(id) + " (valid: 1-13)");
}

TrainConfig apply_scheme(TrainConfig config, const AblationScheme& s) {
    config.network.modules = {s.p1, s.p2, s.i1, s.i2};
    const LossConfig defaults;
    config.loss.lambda1 = s.l1 ? (config.loss.lambda1 != 0 ? config.loss.lambda1 : defaults.lambda1) : 0.0;
    config.loss.lambda2 = s.l2 ? (config.loss.lambda2 != 0 ? config.loss.lambda2 : defaults.lambda2) : 0.0;
    config.loss.lambda3 = s.l3 ? (config.loss.lambda3 != 0 ? config.loss.lambda3 : defaults.lambda3) : 0.0;
    config.loss.lambda4 = s.l4 ? (config.loss.lambda4 != 0 ? config.loss.lambda4 : defaults.lambda4) : 0.0;
    if ((s.l1 || s.l2 || s.l3 || s.l4) && config.loss.mu == 0.0) config.loss.mu = defaults.mu;
    return config;
}

std::string scheme_audit(const AblationScheme& scheme, const TrainConfig& base) {
    const TrainConfig c = apply_scheme(base, scheme);
    return "scheme " + std::to_string(scheme.id) + "\n" + Model(c.network, 0).audit().report() +
           "loss: " + objective_label(c.loss) + "\n";
}

std::vector<AblationRow> ablate(const std::vector<AblationScheme>& schemes, const TrainConfig& base,
                                const std::vector<std::uint64_t>& seeds, const std::vector<Sample>& train_set,
                                const std::vector<Sample>& test_set, std::ostream* progress) {
    if (schemes.empty()) throw ContractError("ablate: no schemes");
    if (seeds.empty()) throw ContractError("ablate: no seeds");
    std::vector<AblationRow> rows;
    for (const auto& scheme : schemes) {
        AblationRow row;
        row.scheme = scheme;
        for (auto seed : seeds) {
            TrainConfig c = apply_scheme(base, scheme);
            c.seed = seed;
            if (progress) *progress << "scheme " << scheme.id << " seed " << seed << std::endl;
            const TrainResult r = train(c, train_set, test_set, nullptr);
            const MetricsReport m = evaluate_model(*r.model, test_set);
            if (progress) *progress << "  mae " << fmt(m.mae) << "  f_max " << fmt(m.f_max) << std::endl;
            row.per_seed.push_back(m);
        }
        const double n = static_cast<double>(seeds.size());
        for (const auto& m : row.per_seed) {
            row.s_alpha += m.s_alpha / n;
            row.f_max += m.f_max / n;
            row.f_avg += m.f_avg / n;
            row.f_weighted += m.f_weighted / n;
            row.e_xi += m.e_xi / n;
            row.mae += m.mae / n;
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
    std::ostringstream o;
    o << "# m2rnet ablation v1: desk run, mean over seeds\n"
      << "scheme,p1,p2,i1,i2,l1,l2,l3,l4,s_alpha,f_max,f_avg,f_weighted,e_xi,mae\n";
    for (const auto& r : rows) {
        const auto& s = r.scheme;
        o << s.id;
        for (bool f : {s.p1, s.p2, s.i1, s.i2, s.l1, s.l2, s.l3, s.l4}) o << ',' << (f ? 1 : 0);
        for (double v : {r.s_alpha, r.f_max, r.f_avg, r.f_weighted, r.e_xi, r.mae}) o << ',' << fmt(v);
        o << '\n';
    }
    return o.str();
}

DatasetScores read_metrics_csv(const std::filesystem::path& path, const std::string& name) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    DatasetScores d;
    d.name = name;
    std::set<std::string> seen;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#' || line == "metric,value") continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw ConfigError(path.string() + ": malformed row '" + line + "'");
        const std::string key = line.substr(0, comma);
        double value = 0;
        try {
            value = std::stod(line.substr(comma + 1));
        } catch (const std::exception&) {
            throw ConfigError(path.string() + ": bad value in row '" + line + "'");
        }
        seen.insert(key);
        if (key == "s_alpha") d.s_alpha = value;
        else if (key == "f_max") d.f_max = value;
        else if (key == "f_avg") d.f_avg = value;
        else if (key == "f_weighted") d.f_weighted = value;
        else if (key == "e_xi") d.e_xi = value;
        else if (key == "mae") d.mae = value;
        else if (key == "images") d.images = static_cast<std::size_t>(value);
    }
    for (const char* k : {"s_alpha", "f_max", "f_avg", "f_weighted", "e_xi", "mae", "images"}) {
        if (!seen.count(k)) throw ConfigError(path.string() + ": missing metric '" + k + "'");
    }
    return d;
}

DatasetScores weighted_by_proportion(const std::vector<DatasetScores>& datasets) {
    std::size_t total = 0;
    for (const auto& d : datasets) total += d.images;
    if (total == 0) throw ContractError("weighted_by_proportion: no images");
    DatasetScores out;
    out.name = "weighted";
    out.images = total;
    for (const auto& d : datasets) {
        const double w = static_cast<double>(d.images) / static_cast<double>(total);
        out.s_alpha += w * d.s_alpha;
        out.f_max += w * d.f_max;
        out.f_avg += w * d.f_avg;
        out.f_weighted += w * d.f_weighted;
        out.e_xi += w * d.e_xi;
        out.mae += w * d.mae;
    }
    return out;
}

}  // namespace m2r
