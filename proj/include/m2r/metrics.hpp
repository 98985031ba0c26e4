#pragma once
// Saliency evaluation: MAE, PR / F-measure curves, max and adaptive F,
// weighted F, S-measure and E-measure on single-channel maps in [0, 1].

#include <array>
#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

namespace m2r {

inline constexpr std::size_t kCurvePoints = 255;
using Curve = std::array<double, kCurvePoints>;

struct GrayMap {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> values;  // row-major, height * width

    GrayMap() = default;
    GrayMap(std::size_t h, std::size_t w, double fill = 0.0) : height(h), width(w), values(h * w, fill) {}
    GrayMap(std::size_t h, std::size_t w, std::vector<double> v);
    double& at(std::size_t y, std::size_t x) { return values[y * width + x]; }
    double at(std::size_t y, std::size_t x) const { return values[y * width + x]; }
    std::size_t size() const { return values.size(); }
};

/// Threshold used at curve index k: (k + 1) / 255.
double curve_threshold(std::size_t k);
/// min(2 * mean(pred), 1).
double adaptive_threshold(const GrayMap& pred);

double mae(const GrayMap& pred, const GrayMap& gt);

struct PrCurve {
    Curve precision{};
    Curve recall{};
};
/// gt binarized at 0.5; prediction binarized as pred >= threshold.
PrCurve pr_curve(const GrayMap& pred, const GrayMap& gt);

struct FMeasures {
    double f_max = 0.0;
    double f_avg = 0.0;
    Curve curve{};
};
inline constexpr double kFBetaSquared = 0.3;
/// (1 + b2) P R / (b2 P + R), 0 when P = R = 0.
double f_beta(double precision, double recall, double beta_squared = kFBetaSquared);
FMeasures f_measures(const GrayMap& pred, const GrayMap& gt);

struct ScoreResult {
    double value = 0.0;
    bool degenerate = false;
};

/// Weighted F-measure (beta^2 = 1). All-background gt is degenerate and scores 0.
ScoreResult weighted_f(const GrayMap& pred, const GrayMap& gt);
/// Structure measure with alpha = 0.5.
ScoreResult s_measure(const GrayMap& pred, const GrayMap& gt);
/// Enhanced-alignment measure on the adaptively binarized prediction.
ScoreResult e_measure(const GrayMap& pred, const GrayMap& gt);

struct ImageMetrics {
    double s_alpha = 0.0;
    double f_max = 0.0;
    double f_avg = 0.0;
    double f_weighted = 0.0;
    double e_xi = 0.0;
    double mae = 0.0;
    PrCurve pr;
    Curve f_curve{};
    bool degenerate = false;
};

/// Predictions of another size are bilinearly resampled to the gt grid first.
ImageMetrics evaluate_image(const GrayMap& pred, const GrayMap& gt);

struct MetricsReport {
    double s_alpha = 0.0;
    double f_max = 0.0;
    double f_avg = 0.0;
    double f_weighted = 0.0;
    double e_xi = 0.0;
    double mae = 0.0;
    /// Max over thresholds of the dataset-mean F curve.
    double f_max_curve = 0.0;
    PrCurve pr;
    Curve f_curve{};
    std::size_t images = 0;
    std::size_t degenerate_images = 0;
};

MetricsReport aggregate(const std::vector<ImageMetrics>& per_image);

struct MapPair {
    GrayMap pred;
    GrayMap gt;
};
MetricsReport evaluate_dataset(const std::vector<MapPair>& pairs);

/// metrics.csv, pr_curve.csv and f_curve.csv inside `dir`.
void write_metrics(const MetricsReport& report, const std::filesystem::path& dir);
std::string metrics_csv(const MetricsReport& report);

}  // namespace m2r
