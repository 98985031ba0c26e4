#include "m2r/metrics.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "m2r/error.hpp"
#include "m2r/ops.hpp"

namespace m2r {

namespace {

constexpr double kEps = DBL_EPSILON;

void check_pair(const GrayMap& pred, const GrayMap& gt, const char* op) {
    if (pred.height != gt.height || pred.width != gt.width) {
        throw DimensionError(std::string(op) + ": pred " + std::to_string(pred.height) + "x" +
                             std::to_string(pred.width) + " vs gt " + std::to_string(gt.height) + "x" +
                             std::to_string(gt.width));
    }
    if (gt.size() == 0) throw DimensionError(std::string(op) + ": empty map");
}

std::vector<char> binarize_gt(const GrayMap& gt) {
    std::vector<char> mask(gt.size());
    for (std::size_t i = 0; i < gt.size(); ++i) mask[i] = gt.values[i] >= 0.5;
    return mask;
}

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

struct Counts {
    double tp = 0, fp = 0, positives = 0;
};

Counts count_at(const GrayMap& pred, const std::vector<char>& g, double threshold) {
    Counts c;
    for (std::size_t i = 0; i < g.size(); ++i) {
        const bool p = pred.values[i] >= threshold;
        c.positives += g[i];
        if (p && g[i]) ++c.tp;
        if (p && !g[i]) ++c.fp;
    }
    return c;
}

double precision_of(const Counts& c) { return c.tp + c.fp > 0 ? c.tp / (c.tp + c.fp) : 0.0; }
double recall_of(const Counts& c) { return c.positives > 0 ? c.tp / c.positives : 0.0; }

// Nearest foreground pixel by Euclidean distance, smallest row-major index on
// ties. Rings of growing Chebyshev radius r are scanned until r^2 exceeds
// the best squared distance found.
struct Nearest {
    std::vector<double> distance;
    std::vector<std::size_t> index;
};

Nearest nearest_foreground(const std::vector<char>& g, std::size_t h, std::size_t w) {
    Nearest out{std::vector<double>(g.size(), 0.0), std::vector<std::size_t>(g.size(), 0)};
    const long H = static_cast<long>(h), W = static_cast<long>(w);
    for (long y = 0; y < H; ++y) {
        for (long x = 0; x < W; ++x) {
            const std::size_t self = static_cast<std::size_t>(y * W + x);
            if (g[self]) {
                out.index[self] = self;
                continue;
            }
            long best_d2 = std::numeric_limits<long>::max();
            std::size_t best = 0;
            const long max_r = std::max(H, W);
            for (long r = 1; r <= max_r && r * r <= best_d2; ++r) {
                for (long yy = y - r; yy <= y + r; ++yy) {
                    if (yy < 0 || yy >= H) continue;
                    const bool edge_row = yy == y - r || yy == y + r;
                    const long step = edge_row ? 1 : 2 * r;
                    for (long xx = x - r; xx <= x + r; xx += step) {
                        if (xx < 0 || xx >= W) continue;
                        const std::size_t j = static_cast<std::size_t>(yy * W + xx);
                        if (!g[j]) continue;
                        const long d2 = (yy - y) * (yy - y) + (xx - x) * (xx - x);
                        if (d2 < best_d2 || (d2 == best_d2 && j < best)) {
                            best_d2 = d2;
                            best = j;
                        }
                    }
                }
            }
            out.distance[self] = std::sqrt(static_cast<double>(best_d2));
            out.index[self] = best;
        }
    }
    return out;
}

std::array<double, 49> gaussian_kernel_7x7(double sigma) {
    std::array<double, 49> k{};
    double total = 0.0;
    for (int dy = -3; dy <= 3; ++dy) {
        for (int dx = -3; dx <= 3; ++dx) {
            const double v = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
            k[(dy + 3) * 7 + (dx + 3)] = v;
            total += v;
        }
    }
    for (auto& v : k) v /= total;
    return k;
}

double object_score(const std::vector<double>& x) {
    if (x.empty()) return 0.0;
    const double m = mean_of(x);
    double var = 0.0;
    for (double v : x) var += (v - m) * (v - m);
    const double sd = x.size() > 1 ? std::sqrt(var / static_cast<double>(x.size() - 1)) : 0.0;
    return 2.0 * m / (m * m + 1.0 + sd + kEps);
}

double block_ssim(const GrayMap& pred, const std::vector<char>& g, std::size_t y0, std::size_t y1, std::size_t x0,
                  std::size_t x1) {
    const double n = static_cast<double>((y1 - y0) * (x1 - x0));
    if (n == 0) return 0.0;
    double mx = 0, my = 0;
    for (std::size_t y = y0; y < y1; ++y) {
        for (std::size_t x = x0; x < x1; ++x) {
            mx += pred.at(y, x);
            my += g[y * pred.width + x];
        }
    }
    mx /= n;
    my /= n;
    double sxx = 0, syy = 0, sxy = 0;
    for (std::size_t y = y0; y < y1; ++y) {
        for (std::size_t x = x0; x < x1; ++x) {
            const double a = pred.at(y, x) - mx;
            const double b = g[y * pred.width + x] - my;
            sxx += a * a;
            syy += b * b;
            sxy += a * b;
        }
    }
    const double d = n - 1.0 + kEps;
    sxx /= d;
    syy /= d;
    sxy /= d;
    const double alpha = 4.0 * mx * my * sxy;
    const double beta = (mx * mx + my * my) * (sxx + syy);
    if (alpha != 0.0) return alpha / (beta + kEps);
    if (beta == 0.0) return 1.0;
    return 0.0;
}

}  // namespace

GrayMap::GrayMap(std::size_t h, std::size_t w, std::vector<double> v) : height(h), width(w), values(std::move(v)) {
    if (values.size() != h * w) throw DimensionError("GrayMap: value count does not match " + std::to_string(h) + "x" + std::to_string(w));
}

double curve_threshold(std::size_t k) { return static_cast<double>(k + 1) / 255.0; }

double adaptive_threshold(const GrayMap& pred) { return std::min(2.0 * mean_of(pred.values), 1.0); }

double mae(const GrayMap& pred, const GrayMap& gt) {
    check_pair(pred, gt, "mae");
    double s = 0.0;
    for (std::size_t i = 0; i < gt.size(); ++i) s += std::abs(pred.values[i] - gt.values[i]);
    return s / static_cast<double>(gt.size());
}

PrCurve pr_curve(const GrayMap& pred, const GrayMap& gt) {
    check_pair(pred, gt, "pr_curve");
    const auto g = binarize_gt(gt);
    // Histogram of prediction levels so all 255 thresholds cost one pass.
    std::array<double, kCurvePoints + 1> fg_hist{}, bg_hist{};
    double positives = 0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        // Largest k with p >= (k + 1) / 255, or none.
        const double p = pred.values[i];
        long k = static_cast<long>(std::floor(p * 255.0)) - 1;
        k = std::clamp(k, -1L, static_cast<long>(kCurvePoints) - 1);
        while (k + 1 < static_cast<long>(kCurvePoints) && p >= curve_threshold(static_cast<std::size_t>(k + 1))) ++k;
        while (k >= 0 && p < curve_threshold(static_cast<std::size_t>(k))) --k;
        (g[i] ? fg_hist : bg_hist)[static_cast<std::size_t>(k + 1)] += 1;
        positives += g[i];
    }
    PrCurve out;
    double tp = 0, fp = 0;
    for (std::size_t k = kCurvePoints; k-- > 0;) {
        tp += fg_hist[k + 1];
        fp += bg_hist[k + 1];
        const Counts c{tp, fp, positives};
        out.precision[k] = precision_of(c);
        out.recall[k] = recall_of(c);
    }
    return out;
}

double f_beta(double precision, double recall, double beta_squared) {
    const double den = beta_squared * precision + recall;
    return den > 0 ? (1.0 + beta_squared) * precision * recall / den : 0.0;
}

FMeasures f_measures(const GrayMap& pred, const GrayMap& gt) {
    const PrCurve pr = pr_curve(pred, gt);
    FMeasures out;
    for (std::size_t k = 0; k < kCurvePoints; ++k) {
        out.curve[k] = f_beta(pr.precision[k], pr.recall[k]);
        out.f_max = std::max(out.f_max, out.curve[k]);
    }
    const Counts c = count_at(pred, binarize_gt(gt), adaptive_threshold(pred));
    out.f_avg = f_beta(precision_of(c), recall_of(c));
    return out;
}

ScoreResult weighted_f(const GrayMap& pred, const GrayMap& gt) {
    check_pair(pred, gt, "weighted_f");
    const auto g = binarize_gt(gt);
    const std::size_t h = gt.height, w = gt.width, n = gt.size();
    std::size_t fg_count = 0;
    for (char c : g) fg_count += c;
    if (fg_count == 0) return {0.0, true};

    std::vector<double> e(n);
    for (std::size_t i = 0; i < n; ++i) e[i] = std::abs(pred.values[i] - static_cast<double>(g[i]));
    const Nearest near = nearest_foreground(g, h, w);
    std::vector<double> et(n);
    for (std::size_t i = 0; i < n; ++i) et[i] = g[i] ? e[i] : e[near.index[i]];

    const auto kernel = gaussian_kernel_7x7(5.0);
    std::vector<double> ew(n);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            const std::size_t i = y * w + x;
            if (g[i]) {
                double ea = 0.0;
                for (int dy = -3; dy <= 3; ++dy) {
                    const long yy = static_cast<long>(y) + dy;
                    if (yy < 0 || yy >= static_cast<long>(h)) continue;
                    for (int dx = -3; dx <= 3; ++dx) {
                        const long xx = static_cast<long>(x) + dx;
                        if (xx < 0 || xx >= static_cast<long>(w)) continue;
                        ea += kernel[(dy + 3) * 7 + (dx + 3)] * et[static_cast<std::size_t>(yy) * w + static_cast<std::size_t>(xx)];
                    }
                }
                ew[i] = ea < e[i] ? ea : e[i];
            } else {
                ew[i] = e[i] * (2.0 - std::exp(std::log(0.5) / 5.0 * near.distance[i]));
            }
        }
    }
    double fg_err = 0.0, fp = 0.0;
    for (std::size_t i = 0; i < n; ++i) (g[i] ? fg_err : fp) += ew[i];
    const double tp = static_cast<double>(fg_count) - fg_err;
    const double recall = 1.0 - fg_err / static_cast<double>(fg_count);
    const double precision = tp / (kEps + tp + fp);
    return {2.0 * recall * precision / (kEps + recall + precision), false};
}

ScoreResult s_measure(const GrayMap& pred, const GrayMap& gt) {
    check_pair(pred, gt, "s_measure");
    const auto g = binarize_gt(gt);
    const std::size_t h = gt.height, w = gt.width, n = gt.size();
    double fg = 0;
    for (char c : g) fg += c;
    const double y = fg / static_cast<double>(n);
    if (fg == 0) return {1.0 - mean_of(pred.values), true};
    if (fg == static_cast<double>(n)) return {mean_of(pred.values), true};

    std::vector<double> fg_vals, bg_vals;
    for (std::size_t i = 0; i < n; ++i) {
        if (g[i]) fg_vals.push_back(pred.values[i]);
        else bg_vals.push_back(1.0 - pred.values[i]);
    }
    const double s_object = y * object_score(fg_vals) + (1.0 - y) * object_score(bg_vals);

    // Centroid in 1-based coordinates, rounded half away from zero.
    double sx = 0, sy = 0;
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
            if (g[r * w + c]) {
                sx += static_cast<double>(c + 1);
                sy += static_cast<double>(r + 1);
            }
        }
    }
    const auto cx = static_cast<std::size_t>(std::round(sx / fg));
    const auto cy = static_cast<std::size_t>(std::round(sy / fg));
    const double area = static_cast<double>(n);
    const double w1 = static_cast<double>(cx * cy) / area;
    const double w2 = static_cast<double>((w - cx) * cy) / area;
    const double w3 = static_cast<double>(cx * (h - cy)) / area;
    const double w4 = 1.0 - w1 - w2 - w3;
    const double s_region = w1 * block_ssim(pred, g, 0, cy, 0, cx) + w2 * block_ssim(pred, g, 0, cy, cx, w) +
                            w3 * block_ssim(pred, g, cy, h, 0, cx) + w4 * block_ssim(pred, g, cy, h, cx, w);
    return {std::max(0.5 * s_object + 0.5 * s_region, 0.0), false};
}

ScoreResult e_measure(const GrayMap& pred, const GrayMap& gt) {
    check_pair(pred, gt, "e_measure");
    const auto g = binarize_gt(gt);
    const std::size_t n = gt.size();
    const double th = adaptive_threshold(pred);
    std::vector<double> b(n);
    double fg = 0, mb = 0;
    for (std::size_t i = 0; i < n; ++i) {
        b[i] = pred.values[i] >= th ? 1.0 : 0.0;
        fg += g[i];
        mb += b[i];
    }
    double total = 0.0;
    if (fg == 0) {
        for (double v : b) total += 1.0 - v;
        return {total / static_cast<double>(n), true};
    }
    if (fg == static_cast<double>(n)) {
        for (double v : b) total += v;
        return {total / static_cast<double>(n), true};
    }
    mb /= static_cast<double>(n);
    const double mg = fg / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double a = b[i] - mb;
        const double c = g[i] - mg;
        const double xi = 2.0 * a * c / (a * a + c * c + kEps);
        total += (xi + 1.0) * (xi + 1.0) / 4.0;
    }
    return {total / static_cast<double>(n), false};
}

ImageMetrics evaluate_image(const GrayMap& pred_in, const GrayMap& gt) {
    GrayMap pred = pred_in;
    if (pred.height != gt.height || pred.width != gt.width) {
        NoGradGuard no_grad;
        const Tensor t = Tensor::from_values({1, pred.height, pred.width}, pred.values);
        const Tensor r = resample(t, gt.height, gt.width, ResampleMode::bilinear);
        pred = GrayMap(gt.height, gt.width, std::vector<double>(r.values().begin(), r.values().end()));
    }
    ImageMetrics m;
    m.mae = mae(pred, gt);
    m.pr = pr_curve(pred, gt);
    const FMeasures f = f_measures(pred, gt);
    m.f_max = f.f_max;
    m.f_avg = f.f_avg;
    m.f_curve = f.curve;
    const ScoreResult wf = weighted_f(pred, gt);
    const ScoreResult s = s_measure(pred, gt);
    const ScoreResult e = e_measure(pred, gt);
    m.f_weighted = wf.value;
    m.s_alpha = s.value;
    m.e_xi = e.value;
    m.degenerate = wf.degenerate || s.degenerate || e.degenerate;
    return m;
}

MetricsReport aggregate(const std::vector<ImageMetrics>& per_image) {
    if (per_image.empty()) throw ContractError("evaluate_dataset: no images");
    MetricsReport r;
    const double n = static_cast<double>(per_image.size());
    for (const auto& m : per_image) {
        r.s_alpha += m.s_alpha;
        r.f_max += m.f_max;
        r.f_avg += m.f_avg;
        r.f_weighted += m.f_weighted;
        r.e_xi += m.e_xi;
        r.mae += m.mae;
        for (std::size_t k = 0; k < kCurvePoints; ++k) {
            r.pr.precision[k] += m.pr.precision[k];
            r.pr.recall[k] += m.pr.recall[k];
            r.f_curve[k] += m.f_curve[k];
        }
        r.degenerate_images += m.degenerate;
    }
    r.s_alpha /= n;
    r.f_max /= n;
    r.f_avg /= n;
    r.f_weighted /= n;
    r.e_xi /= n;
    r.mae /= n;
    for (std::size_t k = 0; k < kCurvePoints; ++k) {
        r.pr.precision[k] /= n;
        r.pr.recall[k] /= n;
        r.f_curve[k] /= n;
        r.f_max_curve = std::max(r.f_max_curve, r.f_curve[k]);
    }
    r.images = per_image.size();
    return r;
}

MetricsReport evaluate_dataset(const std::vector<MapPair>& pairs) {
    if (pairs.empty()) throw ContractError("evaluate_dataset: no images");
    std::vector<ImageMetrics> per_image;
    per_image.reserve(pairs.size());
    for (const auto& p : pairs) per_image.push_back(evaluate_image(p.pred, p.gt));
    return aggregate(per_image);
}

std::string metrics_csv(const MetricsReport& r) {
    std::ostringstream os;
    os << std::setprecision(12);
    os << "# m2rnet metrics v1\n"
       << "metric,value\n"
       << "s_alpha," << r.s_alpha << '\n'
       << "f_max," << r.f_max << '\n'
       << "f_avg," << r.f_avg << '\n'
       << "f_weighted," << r.f_weighted << '\n'
       << "e_xi," << r.e_xi << '\n'
       << "mae," << r.mae << '\n'
       << "f_max_curve," << r.f_max_curve << '\n'
       << "images," << r.images << '\n'
       << "degenerate_images," << r.degenerate_images << '\n';
    return os.str();
}

void write_metrics(const MetricsReport& r, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    auto open = [&](const char* name) {
        std::ofstream out(dir / name);
        if (!out) throw IoError("cannot write " + (dir / name).string());
        out << std::setprecision(12);
        return out;
    };
    {
        auto out = open("metrics.csv");
        out << metrics_csv(r);
    }
    {
        auto out = open("pr_curve.csv");
        out << "threshold,precision,recall,f_measure\n";
        for (std::size_t k = 0; k < kCurvePoints; ++k) {
            out << curve_threshold(k) << ',' << r.pr.precision[k] << ',' << r.pr.recall[k] << ',' << r.f_curve[k]
                << '\n';
        }
    }
    {
        auto out = open("f_curve.csv");
        out << "threshold,f_measure\n";
        for (std::size_t k = 0; k < kCurvePoints; ++k) out << curve_threshold(k) << ',' << r.f_curve[k] << '\n';
    }
}

}  // namespace m2r
