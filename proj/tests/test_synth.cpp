#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <vector>

#include "kronmark/dataset_io.hpp"
#include "kronmark/errors.hpp"
#include "kronmark/morphometrics.hpp"
#include "kronmark/synth.hpp"

using namespace kronmark;
using namespace kronmark::synth;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
    auto p = fs::temp_directory_path() / ("kronmark_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = double(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i] / n;
        my += y[i] / n;
    }
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    return sxy / std::sqrt(sxx * syy);
}

// Rotation about (cx, cy) through polar coordinates.
Point rotate_polar(Point p, double cx, double cy, double deg) {
    const double r = std::hypot(p.x - cx, p.y - cy);
    const double th = std::atan2(p.y - cy, p.x - cx) + deg * std::numbers::pi / 180.0;
    return {cx + r * std::cos(th), cy + r * std::sin(th)};
}

}  // namespace

TEST(Generator, SameSeedSameRecord) {
    GeneratorConfig g;
    auto a = generate_record(g, 3), b = generate_record(g, 3);
    EXPECT_EQ(a.image.values(), b.image.values());
    EXPECT_EQ(a.landmarks, b.landmarks);
    EXPECT_EQ(a.weight_g, b.weight_g);
    auto all = generate_dataset(g, 5);
    EXPECT_EQ(all[3].landmarks, a.landmarks);
    g.seed = 8;
    EXPECT_NE(generate_record(g, 3).landmarks, a.landmarks);
}

TEST(Generator, ImagesUseEightBitLevels) {
    GeneratorConfig g;
    auto r = generate_record(g, 0);
    EXPECT_EQ(r.image.shape(), (Shape{3, 320, 320}));
    for (float v : r.image.data()) {
        EXPECT_GE(v, 0.f);
        EXPECT_LE(v, 1.f);
        EXPECT_NEAR(v * 255.f, std::round(v * 255.f), 1e-3f);
    }
}

TEST(Generator, NoiseFreeWeightFollowsLaw) {
    GeneratorConfig g;
    g.noise_sd = 0.0;
    for (std::uint64_t id = 0; id < 10; ++id) {
        auto rng = record_stream(g.seed, id);
        SpecimenTraits t;
        auto r = generate_specimen(rng, g, id, &t);
        const double expect = g.allometric_a * std::pow(t.length_mm, g.allometric_b) *
                              (1.0 + g.width_coupling * (t.width_scale - 1.0));
        EXPECT_NEAR(r.weight_g, expect, 1e-12 * expect);
        EXPECT_EQ(t.noise, 0.0);
    }
    EXPECT_DOUBLE_EQ(allometric_weight(g, 100.0, 1.0), g.allometric_a * 1e6);
}

TEST(Generator, ValidationRejectsBadConfigs) {
    GeneratorConfig g;
    g.allometric_b = 4.0;
    EXPECT_THROW(validate(g), ConfigError);
    g = GeneratorConfig{};
    g.length_mm = {200.0, 100.0};
    EXPECT_THROW(validate(g), ConfigError);
    g = GeneratorConfig{};
    g.allometric_a = 0.0;
    EXPECT_THROW(validate(g), ConfigError);
}

TEST(Generator, CanonicalPoseOrdering) {
    GeneratorConfig g;
    g.tilt_deg = {0.0, 0.0};
    for (const auto& r : generate_dataset(g, 20)) {
        const auto& lm = r.landmarks;
        for (std::size_t i = 1; i < 12; ++i) EXPECT_LT(lm[0].x, lm[i].x);
        EXPECT_LT(lm[6].y, lm[7].y);
        EXPECT_LT(lm[8].y, lm[9].y);
        EXPECT_LT(lm[10].y, lm[11].y);
    }
}

TEST(Generator, TotalAndBodyLengthCorrelate) {
    GeneratorConfig g;
    std::vector<double> total, body;
    for (const auto& r : generate_dataset(g, 200)) {
        auto t = morpho::extract_traits(r.landmarks, r.mm_per_px);
        total.push_back(t.total_length);
        body.push_back(t.body_length);
    }
    EXPECT_GE(pearson(total, body), 0.99);
}

TEST(Generator, LengthDerivedWeightTracksTrueWeight) {
    GeneratorConfig g;
    g.noise_sd = 0.02;
    std::vector<double> derived, truth;
    for (const auto& r : generate_dataset(g, 1000)) {
        const double length = morpho::extract_traits(r.landmarks, r.mm_per_px).total_length;
        derived.push_back(g.allometric_a * std::pow(length, g.allometric_b));
        truth.push_back(r.weight_g);
    }
    EXPECT_GE(pearson(derived, truth), 0.99);
}

TEST(Heatmaps, NormalizedChannelsPeakAtNearestCell) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 320.0);
    for (int t = 0; t < 50; ++t) {
        LandmarkSet lm;
        for (auto& p : lm) p = {u(rng), u(rng)};
        auto h = make_heatmap_targets(lm, 1.5);
        ASSERT_EQ(h.shape(), (Shape{12, 56, 56}));
        for (std::size_t c = 0; c < 12; ++c) {
            double s = 0;
            std::size_t arg = 0;
            for (std::size_t i = 0; i < 3136; ++i) {
                s += h[c * 3136 + i];
                if (h[c * 3136 + i] > h[c * 3136 + arg]) arg = i;
            }
            EXPECT_NEAR(s, 1.0, 1e-6);
            const double gx = lm[c].x * 56.0 / 320.0, gy = lm[c].y * 56.0 / 320.0;
            const auto near = [](double g) { return std::min<std::size_t>(55, std::size_t(std::floor(g))); };
            EXPECT_EQ(arg % 56, near(gx));
            EXPECT_EQ(arg / 56, near(gy));
        }
    }
}

TEST(Heatmaps, PeakToNeighbourRatio) {
    LandmarkSet lm;
    lm.fill({(20.0 + 0.5) * 320.0 / 56.0, (30.0 + 0.5) * 320.0 / 56.0});
    auto h = make_heatmap_targets(lm, 1.5);
    const double peak = h[30 * 56 + 20], side = h[30 * 56 + 21];
    EXPECT_NEAR(peak / side, std::exp(1.0 / (2.0 * 1.5 * 1.5)), 1e-9);
    EXPECT_THROW(make_heatmap_targets(lm, 0.0), ContractError);
    lm[0].x = 321.0;
    EXPECT_THROW(make_heatmap_targets(lm, 1.5), ContractError);
}

TEST(Augment, HorizontalFlip) {
    GeneratorConfig g;
    auto r = generate_record(g, 1);
    auto f = warp(r, Affine::hflip(320));
    for (std::size_t i = 0; i < 12; ++i) {
        EXPECT_NEAR(f.landmarks[i].x, 319.0 - r.landmarks[i].x, 1e-9);
        EXPECT_NEAR(f.landmarks[i].y, r.landmarks[i].y, 1e-9);
    }
    for (std::size_t y = 0; y < 320; y += 37)
        for (std::size_t x = 0; x < 320; x += 29)
            EXPECT_NEAR(f.image[y * 320 + x], r.image[y * 320 + (319 - x)], 1e-6);
}

TEST(Augment, ZeroRotationIsIdentity) {
    GeneratorConfig g;
    auto r = generate_record(g, 2);
    auto w = warp(r, Affine::about_center(320, 320, 0.0, 1.0, 0.0, 0.0));
    for (std::size_t i = 0; i < 12; ++i) {
        EXPECT_NEAR(w.landmarks[i].x, r.landmarks[i].x, 1e-9);
        EXPECT_NEAR(w.landmarks[i].y, r.landmarks[i].y, 1e-9);
    }
    for (std::size_t i = 0; i < r.image.size(); ++i) ASSERT_NEAR(w.image[i], r.image[i], 1e-6);
}

TEST(Augment, RotationMatchesTrigOracle) {
    GeneratorConfig g;
    auto r = generate_record(g, 4);
    bool clamped = false;
    auto w = warp(r, Affine::about_center(320, 320, 20.0, 1.0, 0.0, 0.0), &clamped);
    ASSERT_FALSE(clamped);
    for (std::size_t i = 0; i < 12; ++i) {
        auto o = rotate_polar(r.landmarks[i], 159.5, 159.5, 20.0);
        EXPECT_NEAR(w.landmarks[i].x, o.x, 0.5);
        EXPECT_NEAR(w.landmarks[i].y, o.y, 0.5);
    }
}

TEST(Augment, RecordedTransformReproducesLandmarks) {
    GeneratorConfig g;
    AugmentationConfig a;
    std::mt19937_64 rng(5);
    std::size_t checked = 0;
    for (std::uint64_t id = 0; id < 12; ++id) {
        auto r = generate_record(g, id);
        for (int k = 0; k < 3; ++k) {
            auto out = augment(r, a, rng);
            if (out.clamped) continue;
            ++checked;
            for (std::size_t i = 0; i < 12; ++i) {
                auto p = out.transform.apply(r.landmarks[i]);
                EXPECT_NEAR(out.record.landmarks[i].x, p.x, 0.5);
                EXPECT_NEAR(out.record.landmarks[i].y, p.y, 0.5);
            }
        }
    }
    EXPECT_GT(checked, 20u);
}

TEST(Augment, DeterministicForSeed) {
    GeneratorConfig g;
    auto r = generate_record(g, 6);
    AugmentationConfig a;
    std::mt19937_64 r1(9), r2(9);
    auto x = augment(r, a, r1), y = augment(r, a, r2);
    EXPECT_EQ(x.record.image.values(), y.record.image.values());
    EXPECT_EQ(x.record.landmarks, y.record.landmarks);
    a.hflip_p = 1.5;
    EXPECT_THROW(validate(a), ConfigError);
}

TEST(Affine, ComposeAndInverse) {
    auto a = Affine::about_center(320, 320, 13.0, 1.1, 4.0, -2.0);
    auto b = Affine::hflip(320);
    Point p{17.0, 250.0};
    auto ab = a.compose(b).apply(p);
    auto seq = a.apply(b.apply(p));
    EXPECT_NEAR(ab.x, seq.x, 1e-12);
    EXPECT_NEAR(ab.y, seq.y, 1e-12);
    auto back = a.inverse().apply(a.apply(p));
    EXPECT_NEAR(back.x, p.x, 1e-12);
    EXPECT_NEAR(back.y, p.y, 1e-12);
}

TEST(Split, SizesAndPartition) {
    EXPECT_EQ(split_sizes(10, {0.4, 0.2, 0.4}), (std::array<std::size_t, 3>{4, 2, 4}));
    EXPECT_EQ(split_sizes(7, {0.4, 0.2, 0.4}), (std::array<std::size_t, 3>{3, 1, 3}));
    EXPECT_EQ(split_sizes(500, {0.4, 0.2, 0.4}), (std::array<std::size_t, 3>{200, 100, 200}));
    auto a = split_indices(10, {0.4, 0.2, 0.4}, 7), b = split_indices(10, {0.4, 0.2, 0.4}, 7);
    EXPECT_EQ(a, b);
    std::vector<std::size_t> all;
    for (const auto& part : a) all.insert(all.end(), part.begin(), part.end());
    std::sort(all.begin(), all.end());
    for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(all[i], i);
    EXPECT_NE(split_indices(10, {0.4, 0.2, 0.4}, 8), a);
}

TEST(Split, RecordsAndErrors) {
    std::vector<SpecimenRecord> recs(10);
    for (std::size_t i = 0; i < 10; ++i) recs[i].id = i;
    auto s = split(recs);
    EXPECT_EQ(s.train.size(), 4u);
    EXPECT_EQ(s.val.size(), 2u);
    EXPECT_EQ(s.test.size(), 4u);
    auto idx = split_indices(10, {0.4, 0.2, 0.4}, 7);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(s.train[i].id, idx[0][i]);
    EXPECT_THROW(split(std::vector<SpecimenRecord>(2)), InputError);
    EXPECT_THROW(split(recs, {0.5, 0.2, 0.4}), ContractError);
}

TEST(Luminance, Weights) {
    Tensor<float> img(Shape{3, 1, 1}, std::vector<float>{1.f, 0.5f, 0.f});
    EXPECT_NEAR(luminance(img)[0], 0.299f + 0.5f * 0.587f, 1e-6f);
}

TEST(DatasetIo, RoundTrip) {
    GeneratorConfig g;
    auto recs = generate_dataset(g, 100);
    auto dir = temp_dir("roundtrip");
    io::save_dataset(recs, dir);
    auto back = io::load_dataset(dir);
    ASSERT_EQ(back.size(), 100u);
    for (std::size_t i = 0; i < 100; ++i) {
        EXPECT_EQ(back[i].id, recs[i].id);
        EXPECT_EQ(back[i].landmarks, recs[i].landmarks);
        EXPECT_EQ(back[i].weight_g, recs[i].weight_g);
        EXPECT_EQ(back[i].mm_per_px, recs[i].mm_per_px);
    }
    EXPECT_EQ(back[7].image.values(), recs[7].image.values());
    fs::remove_all(dir);
}

TEST(DatasetIo, ErrorPaths) {
    GeneratorConfig g;
    auto recs = generate_dataset(g, 3);
    auto dir = temp_dir("errors");
    io::save_dataset(recs, dir);
    fs::remove(dir / "images" / "000001.png");
    EXPECT_THROW(io::load_dataset(dir), MissingFileError);
    auto bad = temp_dir("malformed");
    std::ofstream(bad / io::kIndexFile) << "{\"id\":0,\n";
    EXPECT_THROW(io::load_dataset(bad), ParseError);
    EXPECT_THROW(io::load_dataset(temp_dir("empty_missing") / "nope"), MissingFileError);
    fs::remove_all(dir);
    fs::remove_all(bad);
}

TEST(DatasetIo, NumberFormats) {
    EXPECT_EQ(io::format_fixed2(3.0), "3.00");
    EXPECT_EQ(io::format_fixed2(12.3456), "12.35");
    for (double v : {0.1, 23.418, 1.0 / 3.0, 1e-3, 123456.789}) EXPECT_EQ(std::stod(io::format_exact(v)), v);
}
