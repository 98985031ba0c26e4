#pragma once
// Training, evaluation and ablation drivers.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "m2r/augment.hpp"
#include "m2r/config.hpp"
#include "m2r/dataset.hpp"
#include "m2r/losses.hpp"
#include "m2r/metrics.hpp"
#include "m2r/network.hpp"

namespace m2r {

struct TrainConfig {
    std::size_t batch_size = 4;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    std::size_t epochs = 10;
    double learning_rate = 1e-3;
    /// Model initialisation, shuffling and augmentation.
    std::uint64_t seed = 0;
    /// Synthetic data generation; kept apart so ablation seeds share one dataset.
    std::uint64_t data_seed = 0;
    std::size_t train_samples = 200;
    std::size_t test_samples = 50;
    double contrast = 1.0;
    bool augment = true;
    AugmentOptions augment_options;
    LossConfig loss;
    NetworkConfig network;

    void validate() const;
    SynthOptions synth_options() const;
};

/// Applies every recognised key; unknown keys raise ConfigError.
TrainConfig train_config_from(const Settings& settings);
/// Round-trips through train_config_from.
std::string to_settings_text(const TrainConfig& config);

/// "bce" when the joint terms are off, otherwise e.g. "bce+1*jhol[l1:1,l3:0.5]".
std::string objective_label(const LossConfig& loss);

struct EpochRecord {
    std::size_t epoch = 0;
    /// Epoch 0 is the untrained model over the whole training split.
    double train_loss = 0.0;
    double val_mae = 0.0;
};

struct TrainLog {
    std::string objective;
    std::vector<EpochRecord> epochs;
    std::string csv() const;
};

struct TrainResult {
    std::unique_ptr<Model> model;
    TrainLog log;
};

/// Throws DivergenceError carrying the optimizer step when the loss is not finite.
TrainResult train(const TrainConfig& config, const std::vector<Sample>& train_set, const std::vector<Sample>& val_set,
                  std::ostream* progress = nullptr);

/// Mean loss of the model on `samples` (training-mode normalisation, no update).
double dataset_loss(Model& model, const std::vector<Sample>& samples, const LossConfig& loss, std::size_t batch_size);

/// Mean absolute error of eval-mode predictions.
double validation_mae(const Model& model, const std::vector<Sample>& samples, std::size_t batch_size = 8);

/// Full metric suite over the quantized predictions of `model`.
MetricsReport evaluate_model(const Model& model, const std::vector<Sample>& samples);

GrayMap to_gray_map(const Tensor& chw);
GrayMap to_gray_map(const QuantizedMap& map);

/// Loads every `<stem>.pgm` of pred_dir and matches it with gt_dir/<stem>.pgm.
MetricsReport evaluate_directories(const std::filesystem::path& pred_dir, const std::filesystem::path& gt_dir);

/// Writes <stem>.pgm predictions for `samples` into `dir`.
void write_predictions(const Model& model, const std::vector<Sample>& samples, const std::filesystem::path& dir);

// Ablation

struct AblationScheme {
    int id = 0;
    bool p1 = false, p2 = false, i1 = false, i2 = false;
    bool l1 = false, l2 = false, l3 = false, l4 = false;
};

/// The thirteen flag combinations of the published ablation table.
const std::vector<AblationScheme>& ablation_schemes();
const AblationScheme& ablation_scheme(int id);

TrainConfig apply_scheme(TrainConfig config, const AblationScheme& scheme);

/// Network audit of the scheme plus its loss objective.
std::string scheme_audit(const AblationScheme& scheme, const TrainConfig& base);

struct AblationRow {
    AblationScheme scheme;
    /// Mean over seeds.
    double s_alpha = 0, f_max = 0, f_avg = 0, f_weighted = 0, e_xi = 0, mae = 0;
    std::vector<MetricsReport> per_seed;
};

std::vector<AblationRow> ablate(const std::vector<AblationScheme>& schemes, const TrainConfig& base,
                                const std::vector<std::uint64_t>& seeds, const std::vector<Sample>& train_set,
                                const std::vector<Sample>& test_set, std::ostream* progress = nullptr);

/// scheme, eight flag columns, six metric columns.
std::string ablation_csv(const std::vector<AblationRow>& rows);

// Dataset-proportion weighting

struct DatasetScores {
    std::string name;
    std::size_t images = 0;
    double s_alpha = 0, f_max = 0, f_avg = 0, f_weighted = 0, e_xi = 0, mae = 0;
};

/// Parses a metrics.csv written by write_metrics.
DatasetScores read_metrics_csv(const std::filesystem::path& path, const std::string& name);

/// Every metric averaged with weights images_k / sum(images).
DatasetScores weighted_by_proportion(const std::vector<DatasetScores>& datasets);

}  // namespace m2r
