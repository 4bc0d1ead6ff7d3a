#include "kronmark/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "kronmark/errors.hpp"

namespace kronmark::metrics {

namespace {

void check_distribution(std::span<const double> p, const char* what) {
    double s = 0.0;
    for (double v : p) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw ContractError(std::string(what) + ": entries must be finite and >= 0");
        s += v;
    }
    if (std::abs(s - 1.0) > 1e-6) throw ContractError(std::string(what) + ": distribution sums to " + std::to_string(s));
}

void check_pair(std::span<const double> p, std::span<const double> q, const char* what) {
    if (p.size() != q.size() || p.empty()) {
        throw DimensionError(std::string(what) + ": supports differ (" + std::to_string(p.size()) + " vs " +
                             std::to_string(q.size()) + ")");
    }
    check_distribution(p, what);
    check_distribution(q, what);
}

double kld_unchecked(std::span<const double> p, std::span<const double> q) {
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] == 0.0) continue;
        if (q[i] == 0.0) throw UndefinedMetricError("kld: q is zero where p is positive; divergence is infinite");
        s += p[i] * std::log(p[i] / q[i]);
    }
    return std::max(0.0, s);
}

}  // namespace

double euclidean_distance(std::span<const Point> g, std::span<const Point> p) {
    if (g.size() != p.size()) {
        throw DimensionError("euclidean_distance: " + std::to_string(g.size()) + " vs " + std::to_string(p.size()) +
                             " points");
    }
    double s = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double dx = g[i].x - p[i].x, dy = g[i].y - p[i].y;
        s += dx * dx + dy * dy;
    }
    return std::sqrt(s);
}

double kld(std::span<const double> p, std::span<const double> q) {
    check_pair(p, q, "kld");
    return kld_unchecked(p, q);
}

double jsd(std::span<const double> p, std::span<const double> q) {
    check_pair(p, q, "jsd");
    std::vector<double> m(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) m[i] = 0.5 * (p[i] + q[i]);
    const double js = 0.5 * (kld_unchecked(p, m) + kld_unchecked(q, m));
    return std::sqrt(std::clamp(js, 0.0, std::log(2.0)));
}

double OksConfig::scale(const LandmarkSet& gt) const {
    if (scale_rule == OksScale::fixed) return fixed_scale;
    double x0 = gt[0].x, x1 = gt[0].x, y0 = gt[0].y, y1 = gt[0].y;
    for (const auto& p : gt) {
        x0 = std::min(x0, p.x);
        x1 = std::max(x1, p.x);
        y0 = std::min(y0, p.y);
        y1 = std::max(y1, p.y);
    }
    return std::sqrt((x1 - x0) * (y1 - y0));
}

double oks(const LandmarkSet& pred, const LandmarkSet& gt, const OksConfig& cfg) {
    const double s = cfg.scale(gt);
    if (!(s > 0.0) || !std::isfinite(s)) throw UndefinedMetricError("oks: object scale must be positive");
    double num = 0.0;
    std::size_t visible = 0;
    for (std::size_t i = 0; i < kLandmarkCount; ++i) {
        if (!cfg.visible[i]) continue;
        if (!(cfg.falloff[i] > 0.0)) throw ContractError("oks: falloff constants must be > 0");
        const double dx = pred[i].x - gt[i].x, dy = pred[i].y - gt[i].y;
        const double k = cfg.falloff[i];
        num += std::exp(-(dx * dx + dy * dy) / (2.0 * s * s * k * k));
        ++visible;
    }
    if (visible == 0) throw UndefinedMetricError("oks: no visible keypoints");
    return num / static_cast<double>(visible);
}

std::vector<double> oks_thresholds() {
    std::vector<double> t;
    for (int i = 0; i < 10; ++i) t.push_back((50 + 5 * i) / 100.0);
    return t;
}

EvalReport ap_ar(std::span<const double> oks_values, std::span<const double> thresholds) {
    if (oks_values.empty()) throw InputError("ap_ar: no OKS values");
    if (thresholds.empty()) throw InputError("ap_ar: no thresholds");
    EvalReport r;
    r.per_image_oks.assign(oks_values.begin(), oks_values.end());
    r.thresholds.assign(thresholds.begin(), thresholds.end());
    const double n = static_cast<double>(oks_values.size());
    auto frac = [&](double t) {
        return static_cast<double>(std::count_if(oks_values.begin(), oks_values.end(), [t](double o) { return o >= t - 1e-12; })) / n;
    };
    double sum = 0.0;
    for (double t : thresholds) {
        const double f = frac(t);
        r.precision_at.push_back(f);
        sum += f;
    }
    r.ap = r.ar = sum / static_cast<double>(thresholds.size());
    r.ap50 = r.ar50 = frac(0.50);
    r.ap75 = r.ar75 = frac(0.75);
    return r;
}

EvalReport ap_ar(std::span<const double> oks_values) {
    const auto t = oks_thresholds();
    return ap_ar(oks_values, t);
}

Regression regression_metrics(std::span<const double> pred, std::span<const double> truth) {
    if (pred.size() != truth.size() || pred.empty()) {
        throw DimensionError("regression_metrics: " + std::to_string(pred.size()) + " predictions vs " +
                             std::to_string(truth.size()) + " targets");
    }
    const double n = static_cast<double>(truth.size());
    double mean = 0.0;
    for (double t : truth) mean += t;
    mean /= n;
    Regression r;
    double ss_res = 0.0, ss_tot = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const double e = pred[i] - truth[i];
        r.mae += std::abs(e);
        ss_res += e * e;
        ss_tot += (truth[i] - mean) * (truth[i] - mean);
    }
    r.mae /= n;
    r.mse = ss_res / n;
    if (ss_tot == 0.0) throw UndefinedMetricError("regression_metrics: R^2 is undefined for constant true values");
    r.r2 = 1.0 - ss_res / ss_tot;
    return r;
}

double mad(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) {
        throw DimensionError("mad: lengths " + std::to_string(x.size()) + " and " + std::to_string(y.size()) + " differ");
    }
    if (x.empty()) throw InputError("mad: empty series");
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += std::abs(x[i] - y[i]);
    return s / static_cast<double>(x.size());
}

}  // namespace kronmark::metrics
