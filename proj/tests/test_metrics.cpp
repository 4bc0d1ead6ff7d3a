#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "kronmark/errors.hpp"
#include "kronmark/metrics.hpp"

using namespace kronmark;
using namespace kronmark::metrics;

namespace {

std::vector<double> random_distribution(std::size_t n, std::mt19937_64& rng, bool sparse) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> p(n);
    double s = 0;
    for (auto& v : p) {
        v = sparse && u(rng) < 0.3 ? 0.0 : u(rng);
        s += v;
    }
    if (s == 0.0) {
        p[0] = 1.0;
        s = 1.0;
    }
    for (auto& v : p) v /= s;
    return p;
}

LandmarkSet random_landmarks(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 320.0);
    LandmarkSet lm;
    for (auto& p : lm) p = {u(rng), u(rng)};
    return lm;
}

}  // namespace

TEST(Euclidean, Examples) {
    std::vector<Point> g{{0, 0}}, p{{3, 4}};
    EXPECT_EQ(euclidean_distance(g, g), 0.0);
    EXPECT_NEAR(euclidean_distance(g, p), 5.0, 1e-12);
    std::vector<Point> g2{{0, 0}, {1, 1}}, p2{{3, 4}, {4, 5}};
    EXPECT_NEAR(euclidean_distance(g2, p2), std::sqrt(50.0), 1e-12);
    EXPECT_THROW(euclidean_distance(g, p2), DimensionError);
}

TEST(Kld, Examples) {
    std::vector<double> p{1, 0}, q{0.5, 0.5};
    EXPECT_EQ(kld(p, p), 0.0);
    EXPECT_NEAR(kld(p, q), std::log(2.0), 1e-15);
    EXPECT_THROW(kld(q, p), UndefinedMetricError);
    std::vector<double> bad{0.5, 0.6};
    EXPECT_THROW(kld(bad, q), ContractError);
}

TEST(Kld, NonNegativeOnRandomPairs) {
    std::mt19937_64 rng(1);
    for (int t = 0; t < 1000; ++t) {
        auto p = random_distribution(8, rng, true);
        auto q = random_distribution(8, rng, false);
        EXPECT_GE(kld(p, q), 0.0);
    }
}

TEST(Jsd, Examples) {
    std::vector<double> p{1, 0}, q{0, 1};
    EXPECT_EQ(jsd(p, p), 0.0);
    EXPECT_NEAR(jsd(p, q), std::sqrt(std::log(2.0)), 1e-12);
}

TEST(Jsd, SymmetricAndBounded) {
    std::mt19937_64 rng(2);
    for (int t = 0; t < 1000; ++t) {
        auto p = random_distribution(10, rng, true);
        auto q = random_distribution(10, rng, true);
        const double a = jsd(p, q), b = jsd(q, p);
        EXPECT_NEAR(a, b, 1e-15);
        EXPECT_LE(a * a, std::log(2.0) + 1e-15);
        EXPECT_GE(a, 0.0);
    }
}

TEST(Oks, Examples) {
    std::mt19937_64 rng(3);
    auto gt = random_landmarks(rng);
    EXPECT_EQ(oks(gt, gt), 1.0);

    OksConfig one;
    one.visible.fill(false);
    one.visible[4] = true;
    const double s = one.scale(gt), k = one.falloff[4];
    auto pred = gt;
    pred[4].x += s * k * std::sqrt(2.0);
    EXPECT_NEAR(oks(pred, gt, one), std::exp(-1.0), 1e-12);

    auto far = gt;
    for (auto& p : far) p = {p.x + 1e9, p.y - 1e9};
    EXPECT_EQ(oks(far, gt), 0.0);

    OksConfig none;
    none.visible.fill(false);
    EXPECT_THROW(oks(gt, gt, none), UndefinedMetricError);
    LandmarkSet flat{};
    EXPECT_THROW(oks(flat, flat), UndefinedMetricError);
}

TEST(Oks, BoundingBoxScale) {
    LandmarkSet gt{};
    for (std::size_t i = 0; i < 12; ++i) gt[i] = {10.0 + 5.0 * double(i), 20.0 + double(i % 3) * 10.0};
    OksConfig c;
    EXPECT_NEAR(c.scale(gt), std::sqrt(55.0 * 20.0), 1e-12);
    c.scale_rule = OksScale::fixed;
    c.fixed_scale = 3.0;
    EXPECT_EQ(c.scale(gt), 3.0);
}

TEST(Oks, InvariantUnderUniformScaling) {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> n(0.0, 8.0);
    for (int t = 0; t < 200; ++t) {
        auto gt = random_landmarks(rng);
        auto pred = gt;
        for (auto& p : pred) p = {p.x + n(rng), p.y + n(rng)};
        const double f = 0.1 + 5.0 * std::uniform_real_distribution<double>(0, 1)(rng);
        auto gs = gt, ps = pred;
        for (auto& p : gs) p = {p.x * f, p.y * f};
        for (auto& p : ps) p = {p.x * f, p.y * f};
        EXPECT_NEAR(oks(ps, gs), oks(pred, gt), 1e-12);
    }
}

TEST(ApAr, Examples) {
    std::vector<double> ones(5, 1.0), zeros(5, 0.0);
    auto r1 = ap_ar(ones);
    EXPECT_EQ(r1.ap, 1.0);
    EXPECT_EQ(r1.ar, 1.0);
    for (double p : r1.precision_at) EXPECT_EQ(p, 1.0);
    EXPECT_EQ(ap_ar(zeros).ap, 0.0);
    EXPECT_THROW(ap_ar(std::vector<double>{}), InputError);
}

TEST(ApAr, TwoImageEnumeration) {
    const std::vector<double> values{0.6, 0.9};
    // Fraction of images at or above each threshold, enumerated by hand:
    // .50 .55 .60 -> 1; .65 .70 .75 .80 .85 .90 -> 1/2; .95 -> 0.
    const double expect_ap = (3 * 1.0 + 6 * 0.5 + 0.0) / 10.0;
    auto r = ap_ar(values);
    EXPECT_EQ(r.ap50, 1.0);
    EXPECT_EQ(r.ap75, 0.5);
    EXPECT_NEAR(r.ap, expect_ap, 1e-15);
    EXPECT_NEAR(r.ar, expect_ap, 1e-15);
    EXPECT_EQ(r.ar50, 1.0);
    EXPECT_EQ(r.ar75, 0.5);
    EXPECT_EQ(r.thresholds.size(), 10u);
}

TEST(ApAr, NonIncreasingInThreshold) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int t = 0; t < 100; ++t) {
        std::vector<double> v(37);
        for (auto& x : v) x = u(rng);
        auto r = ap_ar(v);
        for (std::size_t i = 1; i < r.precision_at.size(); ++i) EXPECT_LE(r.precision_at[i], r.precision_at[i - 1]);
    }
}

TEST(Regression, Examples) {
    std::vector<double> truth{1, 2, 3};
    auto same = regression_metrics(truth, truth);
    EXPECT_EQ(same.mae, 0.0);
    EXPECT_EQ(same.mse, 0.0);
    EXPECT_EQ(same.r2, 1.0);
    std::vector<double> mean(3, 2.0);
    EXPECT_NEAR(regression_metrics(mean, truth).r2, 0.0, 1e-15);
    std::vector<double> pred{1, 2, 4};
    auto r = regression_metrics(pred, truth);
    EXPECT_NEAR(r.mae, 1.0 / 3.0, 1e-15);
    EXPECT_NEAR(r.mse, 1.0 / 3.0, 1e-15);
    EXPECT_NEAR(r.r2, 0.5, 1e-15);
    std::vector<double> flat(3, 4.0);
    EXPECT_THROW(regression_metrics(pred, flat), UndefinedMetricError);
    EXPECT_THROW(regression_metrics(pred, std::vector<double>{1, 2}), DimensionError);
}

TEST(Regression, Bounds) {
    std::mt19937_64 rng(6);
    std::normal_distribution<double> n(0.0, 3.0);
    for (int t = 0; t < 200; ++t) {
        std::vector<double> a(20), b(20);
        for (std::size_t i = 0; i < 20; ++i) {
            a[i] = n(rng);
            b[i] = n(rng);
        }
        auto r = regression_metrics(a, b);
        EXPECT_GE(r.mse, 0.0);
        EXPECT_GE(r.mae, 0.0);
        EXPECT_LE(r.r2, 1.0);
    }
}

TEST(Mad, Examples) {
    std::vector<double> x{1, 2}, y{2, 4};
    EXPECT_EQ(mad(x, x), 0.0);
    EXPECT_EQ(mad(x, y), 1.5);
    EXPECT_EQ(mad(y, x), mad(x, y));
}
