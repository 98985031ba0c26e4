// m2rnet: command-line front end for data generation, training, evaluation,
// ablation, prediction and gradient checking.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "m2r/checkpoint.hpp"
#include "m2r/error.hpp"
#include "m2r/gradient_suite.hpp"
#include "m2r/harness.hpp"
#include "m2r/reference.hpp"

namespace fs = std::filesystem;
using namespace m2r;

namespace {

struct Common {
    std::string config;
    std::vector<std::string> sets;
    std::string out;
    std::int64_t seed = -1;
};

void add_common(CLI::App* cmd, Common& c, bool with_config = true) {
    if (with_config) {
        cmd->add_option("--config", c.config, "key = value config file");
        cmd->add_option("--set", c.sets, "override one config key (key=value), repeatable");
        cmd->add_option("--seed", c.seed, "override the seed (beats M2R_SEED and the config)");
    }
    cmd->add_option("--out", c.out, "output directory")->required();
}

TrainConfig resolve_config(const Common& c) {
    Settings s = c.config.empty() ? Settings{} : Settings::load(c.config);
    if (const char* env = std::getenv("M2R_SEED")) s.set("seed", env);
    for (const auto& kv : c.sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
        s.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (c.seed >= 0) s.set("seed", std::to_string(c.seed));
    return train_config_from(s);
}

fs::path make_out(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory " + dir + ": " + ec.message());
    return dir;
}

void write_text(const fs::path& path, std::string_view text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("failed writing " + path.string());
}

void print_report(const MetricsReport& r) {
    std::cout << std::setprecision(6) << "S_alpha " << r.s_alpha << "  F_max " << r.f_max << "  F_avg " << r.f_avg
              << "  F_w " << r.f_weighted << "  E_xi " << r.e_xi << "  MAE " << r.mae << "  (" << r.images
              << " images, " << r.degenerate_images << " degenerate)\n";
}

std::vector<Sample> load_or_generate(const TrainConfig& cfg, const std::string& data_dir) {
    if (!data_dir.empty()) return read_dataset(data_dir);
    return synth_dataset(cfg.train_samples, cfg.test_samples, cfg.data_seed, cfg.synth_options());
}

template <typename T>
std::vector<T> parse_list(const std::string& text, const char* what) {
    std::vector<T> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            const long long v = std::stoll(item, &used);
            if (used != item.size() || v < 0) throw std::invalid_argument(item);
            out.push_back(static_cast<T>(v));
        } catch (const std::exception&) {
            throw ConfigError(std::string(what) + ": '" + item + "' is not a non-negative integer");
        }
    }
    if (out.empty()) throw ConfigError(std::string(what) + " is empty");
    return out;
}

int run_gen_data(const Common& c) {
    const TrainConfig cfg = resolve_config(c);
    const fs::path out = make_out(c.out);
    const auto samples = synth_dataset(cfg.train_samples, cfg.test_samples, cfg.data_seed, cfg.synth_options());
    write_dataset(out, samples);
    std::cout << "wrote " << samples.size() << " samples (" << cfg.train_samples << " train, " << cfg.test_samples
              << " test) at " << cfg.network.resolution << "x" << cfg.network.resolution << " to " << out.string()
              << "\n";
    return 0;
}

int run_train(const Common& c, const std::string& data_dir) {
    const TrainConfig cfg = resolve_config(c);
    const fs::path out = make_out(c.out);
    const auto all = load_or_generate(cfg, data_dir);
    const auto train_set = filter_split(all, "train"), test_set = filter_split(all, "test");
    if (train_set.empty()) throw ContractError("dataset has no 'train' samples");
    write_text(out / "config.cfg", to_settings_text(cfg));
    const TrainResult result = train(cfg, train_set, test_set, &std::cout);
    write_text(out / "train_log.csv", result.log.csv());
    write_text(out / "audit.txt", result.model->audit().report());
    save_checkpoint(*result.model, out / "model.ckpt");
    if (!test_set.empty()) {
        write_predictions(*result.model, test_set, out / "pred");
        const MetricsReport report = evaluate_model(*result.model, test_set);
        write_metrics(report, out);
        print_report(report);
    }
    std::cout << "outputs in " << out.string() << "\n";
    return 0;
}

int run_eval(const Common& c, const std::string& pred_dir, const std::string& gt_dir) {
    const fs::path out = make_out(c.out);
    const MetricsReport report = evaluate_directories(pred_dir, gt_dir);
    write_metrics(report, out);
    print_report(report);
    return 0;
}

int run_predict(const Common& c, const std::string& checkpoint, const std::string& data_dir,
                const std::string& rgb_dir, const std::string& depth_dir) {
    const auto model = load_checkpoint(checkpoint);
    std::vector<Sample> inputs;
    if (!data_dir.empty()) {
        inputs = read_inputs(fs::path(data_dir) / "rgb", fs::path(data_dir) / "depth");
    } else if (!rgb_dir.empty() && !depth_dir.empty()) {
        inputs = read_inputs(rgb_dir, depth_dir);
    } else {
        throw ConfigError("predict needs --data or both --rgb-dir and --depth-dir");
    }
    const fs::path out = make_out(c.out);
    write_predictions(*model, inputs, out);
    std::cout << "wrote " << inputs.size() << " saliency maps to " << out.string() << "\n";
    return 0;
}

int run_ablate(const Common& c, const std::string& data_dir, const std::string& schemes_text,
               const std::string& seeds_text) {
    const TrainConfig cfg = resolve_config(c);
    const fs::path out = make_out(c.out);
    std::vector<AblationScheme> schemes;
    if (schemes_text.empty()) {
        schemes = ablation_schemes();
    } else {
        for (int id : parse_list<int>(schemes_text, "--schemes")) schemes.push_back(ablation_scheme(id));
    }
    const auto seeds = parse_list<std::uint64_t>(seeds_text, "--seeds");
    const auto all = load_or_generate(cfg, data_dir);
    const auto train_set = filter_split(all, "train"), test_set = filter_split(all, "test");
    if (test_set.empty()) throw ContractError("ablation needs 'test' samples");
    std::string audits;
    for (const auto& s : schemes) audits += scheme_audit(s, cfg) + "\n";
    write_text(out / "scheme_audit.txt", audits);
    write_text(out / "config.cfg", to_settings_text(cfg));
    const auto rows = ablate(schemes, cfg, seeds, train_set, test_set, &std::cout);
    write_text(out / "ablation.csv", ablation_csv(rows));
    write_text(out / "table2_reference.csv", reference_ablation_csv());
    write_text(out / "table1_reference.csv", reference_benchmark_csv());
    std::cout << ablation_csv(rows) << "Published values (not desk-reproducible) are in "
              << (out / "table2_reference.csv").string() << "\n";
    return 0;
}

int run_gradcheck(const std::string& out_dir, std::uint64_t seed, std::size_t trials, const std::string& filter) {
    GradientSuiteOptions o;
    o.seed = seed;
    o.trials = trials;
    o.filter = filter;
    const GradientSuiteReport r = run_gradient_suite(o, &std::cout);
    std::cout << "max relative error " << std::setprecision(6) << r.max_relative_error << " over " << r.checks.size()
              << " checks in " << std::setprecision(3) << r.seconds << " s: " << (r.passed ? "PASS" : "FAIL")
              << "\n";
    if (!out_dir.empty()) {
        std::ostringstream csv;
        csv << "# m2rnet gradcheck v1\ncheck,trials,checked,skipped,max_relative_error,passed\n";
        for (const auto& c : r.checks) {
            csv << c.name << ',' << c.trials << ',' << c.checked << ',' << c.skipped << ',' << std::setprecision(12)
                << c.max_relative_error << ',' << (c.passed ? 1 : 0) << '\n';
        }
        write_text(make_out(out_dir) / "gradcheck.csv", csv.str());
    }
    return r.passed ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"M2RNet RGB-D salient object detection toolkit"};
    app.require_subcommand(1);

    Common gen, tr, ev, pr, ab;
    std::string train_data, pred_dir, gt_dir, checkpoint, predict_data, rgb_dir, depth_dir, ablate_data;
    std::string schemes = "", seeds = "0,1,2", gc_out, gc_filter;
    std::uint64_t gc_seed = 0;
    std::size_t gc_trials = 100;

    auto* cmd_gen = app.add_subcommand("gen-data", "write a synthetic RGB-D dataset");
    add_common(cmd_gen, gen);
    auto* cmd_train = app.add_subcommand("train", "train a model and evaluate it on the test split");
    add_common(cmd_train, tr);
    cmd_train->add_option("--data", train_data, "dataset directory (default: synthesize from the config)");
    auto* cmd_eval = app.add_subcommand("eval", "score saliency maps against ground truth");
    add_common(cmd_eval, ev, false);
    cmd_eval->add_option("--pred-dir", pred_dir, "directory of predicted .pgm maps")->required();
    cmd_eval->add_option("--gt-dir", gt_dir, "directory of ground-truth .pgm masks")->required();
    auto* cmd_predict = app.add_subcommand("predict", "write saliency maps for RGB-D inputs");
    add_common(cmd_predict, pr, false);
    cmd_predict->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
    cmd_predict->add_option("--data", predict_data, "dataset directory with rgb/ and depth/");
    cmd_predict->add_option("--rgb-dir", rgb_dir, "directory of .ppm images");
    cmd_predict->add_option("--depth-dir", depth_dir, "directory of .pgm depth maps");
    auto* cmd_ablate = app.add_subcommand("ablate", "train and score the ablation schemes");
    add_common(cmd_ablate, ab);
    cmd_ablate->add_option("--data", ablate_data, "dataset directory (default: synthesize from the config)");
    cmd_ablate->add_option("--schemes", schemes, "comma-separated scheme ids (default: all 13)");
    cmd_ablate->add_option("--seeds", seeds, "comma-separated training seeds")->capture_default_str();
    auto* cmd_grad = app.add_subcommand("gradcheck", "finite-difference gradient suite");
    cmd_grad->add_option("--seed", gc_seed, "suite seed")->capture_default_str();
    cmd_grad->add_option("--trials", gc_trials, "trials per check")->capture_default_str();
    cmd_grad->add_option("--filter", gc_filter, "only checks whose name contains this");
    cmd_grad->add_option("--out", gc_out, "directory for gradcheck.csv");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << app.help();
        for (auto* sub : app.get_subcommands()) std::cerr << "\n" << sub->help();
        return 1;
    }

    try {
        if (*cmd_gen) return run_gen_data(gen);
        if (*cmd_train) return run_train(tr, train_data);
        if (*cmd_eval) return run_eval(ev, pred_dir, gt_dir);
        if (*cmd_predict) return run_predict(pr, checkpoint, predict_data, rgb_dir, depth_dir);
        if (*cmd_ablate) return run_ablate(ab, ablate_data, schemes, seeds);
        if (*cmd_grad) return run_gradcheck(gc_out, gc_seed, gc_trials, gc_filter);
    } catch (const IoError& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return 2;
    } catch (const CodecError& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
