#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "kronmark/landmarks.hpp"

namespace kronmark::metrics {

// sqrt(sum_i |g_i - p_i|^2). Throws DimensionError on a count mismatch.
double euclidean_distance(std::span<const Point> g, std::span<const Point> p);

// sum p_i log(p_i / q_i) with 0 log 0 = 0. Throws UndefinedMetricError when
// q_i = 0 while p_i > 0, ContractError for inputs that are not distributions.
double kld(std::span<const double> p, std::span<const double> q);

// sqrt((KLD(P||M) + KLD(Q||M)) / 2), M = (P + Q) / 2.
double jsd(std::span<const double> p, std::span<const double> q);

enum class OksScale {
    bbox_sqrt_area,  // sqrt of the area of the ground-truth landmark bounding box
    fixed,
};

struct OksConfig {
    std::array<double, kLandmarkCount> falloff;  // k_i
    std::array<bool, kLandmarkCount> visible;
    OksScale scale_rule = OksScale::bbox_sqrt_area;
    double fixed_scale = 1.0;

    OksConfig() {
        falloff.fill(0.1);
        visible.fill(true);
    }
    double scale(const LandmarkSet& gt) const;
};

// Mean of exp(-d_i^2 / (2 s^2 k_i^2)) over visible keypoints. Throws
// UndefinedMetricError with no visible keypoint or a zero scale.
double oks(const LandmarkSet& pred, const LandmarkSet& gt, const OksConfig& cfg = {});

struct EvalReport {
    double ap = 0.0, ap50 = 0.0, ap75 = 0.0;
    double ar = 0.0, ar50 = 0.0, ar75 = 0.0;
    std::vector<double> per_image_oks;
    std::vector<double> thresholds;
    std::vector<double> precision_at;  // one per threshold
};

// Thresholds .50:.05:.95.
std::vector<double> oks_thresholds();

// One prediction per image: at threshold t precision and recall are both the
// fraction of images with OKS >= t. Throws InputError on an empty list.
EvalReport ap_ar(std::span<const double> oks_values, std::span<const double> thresholds);
EvalReport ap_ar(std::span<const double> oks_values);

struct Regression {
    double mae = 0.0;
    double mse = 0.0;
    double r2 = 0.0;
};

// Throws DimensionError for unequal or empty inputs and UndefinedMetricError
// when the true values are constant.
Regression regression_metrics(std::span<const double> pred, std::span<const double> truth);

// (1/n) sum |x_i - y_i|.
double mad(std::span<const double> x, std::span<const double> y);

}  // namespace kronmark::metrics
