#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "kronmark/errors.hpp"
#include "kronmark/landmark_net.hpp"
#include "kronmark/ops.hpp"
#include "kronmark/synth.hpp"
#include "support/configs.hpp"
#include "support/gradcheck.hpp"
#include "support/net_gradcheck.hpp"

using namespace kronmark;
using kronmark::testing::grad_check;
using kronmark::testing::random_tensor;
using kronmark::testing::tiny_config;
using TD = Tensor<double>;

namespace {

Tensor<float> random_image(std::size_t size, std::mt19937_64& rng) {
    std::uniform_real_distribution<float> u(0.f, 1.f);
    Tensor<float> img(Shape{3, size, size});
    for (float& v : img.data()) v = u(rng);
    return img;
}

std::vector<synth::SpecimenRecord> records(std::size_t n) {
    synth::GeneratorConfig g;
    return synth::generate_dataset(g, n);
}

// Parameter total assembled layer by layer from the closed-form counts.
std::uint64_t expected_params(const net::KpfemConfig& cfg) {
    std::uint64_t total = 0;
    for (const auto& l : cfg.layers) total += count_params(l.in_channels, l.out_channels, l.kernel, l.order, true);
    for (const auto& s : cfg.skips) {
        const std::size_t src = cfg.layers[s.from - 1].out_channels, dst = cfg.layers[s.to - 1].in_channels;
        if (src != dst) total += count_params(src, dst, 1, cfg.projection_order(s), true);
    }
    const std::size_t c = cfg.layers.back().out_channels, l = cfg.landmarks;
    total += l * c + l;
    total += 2 * l * c + 2 * l;
    return total;
}

}  // namespace

TEST(KpfemConfig, DefaultTopology) {
    auto cfg = net::KpfemConfig::defaults();
    EXPECT_NO_THROW(cfg.validate());
    ASSERT_EQ(cfg.layers.size(), 14u);
    EXPECT_EQ(cfg.layers[0].in_channels, 3u);
    EXPECT_EQ(cfg.layers[0].out_channels, 24u);
    EXPECT_EQ(cfg.layers[4].out_channels, 96u);
    for (const auto& l : cfg.layers) EXPECT_EQ(l.order, 3u);
    EXPECT_EQ(cfg.pool_after, (std::vector<std::size_t>{2, 4, 6, 8}));
    ASSERT_EQ(cfg.skips.size(), 6u);
    EXPECT_EQ(cfg.feature_shape(), (Shape{96, 20, 20}));
    EXPECT_TRUE(cfg.needs_projection(cfg.skips[0]));
    EXPECT_TRUE(cfg.needs_projection(cfg.skips[1]));
    EXPECT_FALSE(cfg.needs_projection(cfg.skips[2]));
}

TEST(KpfemConfig, ParameterCountMatchesLayerSum) {
    for (std::size_t n : {1u, 3u}) {
        auto cfg = net::KpfemConfig::defaults_with_order(n);
        auto p = net::init_params<float>(cfg, 1);
        EXPECT_EQ(p.parameter_count(), expected_params(cfg));
    }
    auto tiny = tiny_config();
    EXPECT_EQ(net::init_params<float>(tiny, 1).parameter_count(), expected_params(tiny));
}

TEST(KpfemConfig, ValidationRejectsBadTopologies) {
    auto cfg = net::KpfemConfig::defaults();
    auto short_cfg = cfg;
    short_cfg.layers.pop_back();
    EXPECT_THROW(short_cfg.validate(), ConfigError);
    auto broken = cfg;
    broken.layers[3].in_channels = 24;
    EXPECT_THROW(broken.validate(), ConfigError);
    auto bad_order = cfg;
    bad_order.layers[2].order = 5;
    EXPECT_THROW(bad_order.validate(), ConfigError);
    auto bad_skip = cfg;
    bad_skip.skips.push_back({1, 10});
    EXPECT_THROW(bad_skip.validate(), ConfigError);
}

TEST(KpfemConfig, JsonRoundTripAndDigest) {
    auto cfg = net::KpfemConfig::defaults();
    auto back = net::KpfemConfig::from_json(cfg.to_json());
    EXPECT_EQ(back.to_json(), cfg.to_json());
    EXPECT_EQ(back.digest(), cfg.digest());
    EXPECT_NE(net::KpfemConfig::defaults_with_order(1).digest(), cfg.digest());
    EXPECT_THROW(net::KpfemConfig::from_json("{not json"), ConfigError);
}

TEST(LandmarkNet, InitIsSeedDeterministic) {
    auto cfg = tiny_config();
    auto a = net::init_params<float>(cfg, 5), b = net::init_params<float>(cfg, 5), c = net::init_params<float>(cfg, 6);
    auto na = a.named_tensors(), nb = b.named_tensors(), nc = c.named_tensors();
    ASSERT_EQ(na.size(), nb.size());
    bool differs = false;
    for (std::size_t i = 0; i < na.size(); ++i) {
        EXPECT_EQ(na[i].first, nb[i].first);
        EXPECT_EQ(na[i].second->values(), nb[i].second->values());
        differs |= na[i].second->values() != nc[i].second->values();
    }
    EXPECT_TRUE(differs);
}

TEST(LandmarkNet, CheckpointRoundTrip) {
    auto cfg = tiny_config();
    auto p = net::init_params<float>(cfg, 3);
    auto ck = deserialize_checkpoint(serialize_checkpoint(net::to_checkpoint(cfg, p)));
    auto q = net::from_checkpoint(cfg, ck);
    auto np = p.named_tensors(), nq = q.named_tensors();
    ASSERT_EQ(np.size(), nq.size());
    for (std::size_t i = 0; i < np.size(); ++i) EXPECT_EQ(np[i].second->values(), nq[i].second->values());

    auto other = cfg;
    other.layers[13].order = 1;
    EXPECT_THROW(net::from_checkpoint(other, ck), CompatibilityError);
    auto missing = ck;
    missing.tensors.pop_back();
    EXPECT_THROW(net::from_checkpoint(cfg, missing), ParseError);
}

TEST(LandmarkNet, Preprocess) {
    Tensor<float> img(Shape{3, 1, 2}, std::vector<float>{0.f, 1.f, 0.5f, 0.25f, 0.75f, 0.5f});
    auto x = net::preprocess<double>(img);
    EXPECT_EQ(x.values(), (std::vector<double>{-2, 2, 0, -1, 1, 0}));
}

TEST(LandmarkNet, ZeroImageForwardIsBitDeterministic) {
    auto cfg = net::KpfemConfig::defaults();
    auto p = net::init_params<float>(cfg, 7);
    Tensor<float> zero(Shape{3, 320, 320}, 0.f);
    auto a = net::kpfem_forward(zero, cfg, p);
    auto b = net::kpfem_forward(zero, cfg, p);
    EXPECT_EQ(a.shape(), (Shape{96, 20, 20}));
    EXPECT_EQ(a.values(), b.values());
}

TEST(LandmarkNet, RemovingSkipChangesOutput) {
    auto cfg = tiny_config();
    auto p = net::init_params<double>(cfg, 8);
    std::mt19937_64 rng(8);
    auto x = net::preprocess<double>(random_image(cfg.input_size, rng));
    auto full = net::kpfem_forward(x, cfg, p);
    for (std::size_t k = 0; k < cfg.skips.size(); ++k) {
        net::ForwardOptions opts;
        opts.disabled_skips = {k};
        auto cut = net::kpfem_forward(x, cfg, p, opts);
        EXPECT_NE(cut.values(), full.values()) << "skip " << k;
    }
}

TEST(LandmarkNet, HeadOutputContract) {
    auto cfg = net::KpfemConfig::defaults();
    std::mt19937_64 rng(9);
    for (std::uint64_t seed : {1u, 2u}) {
        auto p = net::init_params<float>(cfg, seed);
        auto pred = net::predict(random_image(320, rng), cfg, p);
        ASSERT_EQ(pred.heatmaps.shape(), (Shape{12, 56, 56}));
        ASSERT_EQ(pred.coords.shape(), (Shape{12, 2}));
        for (std::size_t c = 0; c < 12; ++c) {
            double s = 0;
            for (std::size_t i = 0; i < 56 * 56; ++i) s += pred.heatmaps[c * 56 * 56 + i];
            EXPECT_NEAR(s, 1.0, 1e-4);
        }
        for (float v : pred.coords.data()) {
            EXPECT_GE(v, 0.f);
            EXPECT_LE(v, 1.f);
        }
    }
}

TEST(LandmarkNet, HeadOutputsStayValidForExtremeParameters) {
    auto cfg = tiny_config();
    auto p = net::init_params<double>(cfg, 10);
    std::mt19937_64 rng(10);
    for (auto& [name, t] : p.named_tensors())
        for (double& v : t->data()) v *= 40.0;
    auto pred = net::predict(random_image(cfg.input_size, rng), cfg, p);
    EXPECT_TRUE(pred.heatmaps.all_finite());
    for (std::size_t c = 0; c < 12; ++c) {
        double s = 0;
        for (std::size_t i = 0; i < 64; ++i) s += pred.heatmaps[c * 64 + i];
        EXPECT_NEAR(s, 1.0, 1e-9);
    }
    for (double v : pred.coords.data()) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
    }
}

TEST(DecodePeak, DeltaMass) {
    TD h(Shape{12, 56, 56}, 0.0);
    for (std::size_t c = 0; c < 12; ++c) h[c * 3136 + 10 * 56 + 20] = 1.0;
    auto lm = net::decode_peak(h, 320, 320);
    for (const auto& p : lm) {
        EXPECT_NEAR(p.x, 20.5 * 320.0 / 56.0, 1e-12);
        EXPECT_NEAR(p.y, 10.5 * 320.0 / 56.0, 1e-12);
    }
}

TEST(DecodePeak, UniformChannelTieBreaksToFirstCell) {
    TD h(Shape{12, 56, 56}, 1.0 / 3136.0);
    auto lm = net::decode_peak(h, 320, 320);
    EXPECT_NEAR(lm[0].x, 0.5 * 320.0 / 56.0, 1e-12);
    EXPECT_NEAR(lm[0].y, 0.5 * 320.0 / 56.0, 1e-12);
}

TEST(DecodePeak, LastCellStaysInBounds) {
    TD h(Shape{12, 56, 56}, 0.0);
    for (std::size_t c = 0; c < 12; ++c) h[c * 3136 + 3135] = 1.0;
    for (const auto& p : net::decode_peak(h, 320, 320)) {
        EXPECT_LT(p.x, 320.0);
        EXPECT_LT(p.y, 320.0);
    }
}

TEST(DecodePeak, RecoversEncodedLandmarksWithinOneCell) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 320.0);
    const double cell = 320.0 / 56.0;
    for (int t = 0; t < 200; ++t) {
        LandmarkSet lm;
        for (auto& p : lm) p = {u(rng), u(rng)};
        auto h = synth::make_heatmap_targets(lm, 1.5);
        auto back = net::decode_peak(h, 320, 320);
        for (std::size_t i = 0; i < 12; ++i) {
            EXPECT_LE(std::abs(back[i].x - lm[i].x), cell);
            EXPECT_LE(std::abs(back[i].y - lm[i].y), cell);
        }
    }
}

TEST(DecodeCoords, ScalesToPixels) {
    TD c(Shape{12, 2}, 0.5);
    c[0] = 0.25;
    c[1] = 1.0;
    auto lm = net::decode_coords(c, 320, 200);
    EXPECT_EQ(lm[0].x, 80.0);
    EXPECT_EQ(lm[0].y, 200.0);
    EXPECT_EQ(lm[5].x, 160.0);
    LandmarkSet g;
    g[3] = {32.0, 100.0};
    auto t = net::coordinate_targets<double>(g, 320, 200);
    EXPECT_EQ(t[6], 0.1);
    EXPECT_EQ(t[7], 0.5);
}

TEST(MultitaskLoss, Examples) {
    std::mt19937_64 rng(12);
    LandmarkSet lm;
    std::uniform_real_distribution<double> u(10.0, 300.0);
    for (auto& p : lm) p = {u(rng), u(rng)};
    auto heat = synth::make_heatmap_targets(lm, 1.5);
    auto coords = net::coordinate_targets<double>(lm, 320, 320);
    auto same = net::multitask_loss(heat, coords, heat, coords);
    EXPECT_EQ(same.total, 0.0);

    TD g(Shape{1, 2}, 0.0), p(Shape{1, 2}, std::vector<double>{0.6, 0.8});
    TD h(Shape{1, 2, 2}, std::vector<double>{0.25, 0.25, 0.25, 0.25});
    auto one = net::multitask_loss(h, p, h, g);
    EXPECT_NEAR(one.coords, 1.0, 1e-15);
    EXPECT_EQ(one.heatmap, 0.0);
    EXPECT_NEAR(one.total, 0.5, 1e-15);

    TD bad(Shape{1, 2, 2}, 0.5);
    EXPECT_THROW(net::multitask_loss(h, p, bad, g), ContractError);
}

TEST(MultitaskLoss, NonNegativeAndZeroOnlyAtMatch) {
    std::mt19937_64 rng(13);
    for (int t = 0; t < 50; ++t) {
        auto ph = ops::spatial_softmax(random_tensor(Shape{12, 6, 6}, rng, -3, 3));
        auto th = ops::spatial_softmax(random_tensor(Shape{12, 6, 6}, rng, -3, 3));
        auto pc = random_tensor(Shape{12, 2}, rng, 0, 1);
        auto tc = random_tensor(Shape{12, 2}, rng, 0, 1);
        auto l = net::multitask_loss(ph, pc, th, tc);
        EXPECT_GT(l.total, 0.0);
        EXPECT_GT(net::multitask_loss(ph, pc, ph, tc).total, 0.0);
        EXPECT_GT(net::multitask_loss(ph, pc, th, pc).total, 0.0);
        EXPECT_EQ(net::multitask_loss(ph, pc, ph, pc).total, 0.0);
    }
}

TEST(LandmarkNet, EndToEndGradientMatchesFiniteDifferences) {
    auto c = kronmark::testing::net_grad_case(tiny_config(), 14);
    auto r = grad_check(c.inputs, c.loss, 60, 14);
    EXPECT_LT(r.max_rel_error, 1e-3);
}

TEST(TrainConfig, DefaultsAndSchedule) {
    net::TrainConfig t;
    EXPECT_EQ(t.learning_rate, 1e-3);
    EXPECT_EQ(t.batch_size, 64u);
    EXPECT_EQ(t.epochs, 200u);
    EXPECT_DOUBLE_EQ(t.learning_rate_at(1), 1e-3);
    EXPECT_DOUBLE_EQ(t.learning_rate_at(50), 1e-3);
    EXPECT_DOUBLE_EQ(t.learning_rate_at(51), 1e-4);
    EXPECT_DOUBLE_EQ(t.learning_rate_at(101), 1e-5);
    auto lit = net::TrainConfig::literal_schedule();
    EXPECT_DOUBLE_EQ(lit.learning_rate_at(51), 1e-6);
    auto bad = t;
    bad.batch_size = 0;
    EXPECT_THROW(bad.validate(), ConfigError);
    bad = t;
    bad.learning_rate = -1;
    EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Train, SingleSampleSmoke) {
    auto cfg = tiny_config(320, 56);
    auto data = records(1);
    net::TrainConfig t;
    t.epochs = 1;
    t.workers = 1;
    auto r = net::train(data, data, cfg, t);
    ASSERT_EQ(r.history.size(), 1u);
    EXPECT_TRUE(std::isfinite(r.history[0].train_avg));
    EXPECT_TRUE(std::isfinite(r.history[0].val_avg));
    EXPECT_THROW(net::train({}, data, cfg, t), InputError);
}

TEST(Train, DeterministicAndWorkerIndependent) {
    auto cfg = tiny_config(320, 56);
    auto data = records(6);
    std::vector<synth::SpecimenRecord> tr(data.begin(), data.begin() + 4), va(data.begin() + 4, data.end());
    net::TrainConfig t;
    t.epochs = 2;
    t.batch_size = 3;
    t.workers = 1;
    auto a = net::train(tr, va, cfg, t);
    auto b = net::train(tr, va, cfg, t);
    t.workers = 3;
    auto c = net::train(tr, va, cfg, t);
    ASSERT_EQ(a.history.size(), 2u);
    for (std::size_t e = 0; e < 2; ++e) {
        EXPECT_EQ(a.history[e].train_avg, b.history[e].train_avg);
        EXPECT_EQ(a.history[e].val_avg, b.history[e].val_avg);
        EXPECT_EQ(a.history[e].train_avg, c.history[e].train_avg);
        EXPECT_EQ(a.history[e].val_avg, c.history[e].val_avg);
    }
    auto na = a.params.named_tensors(), nc = c.params.named_tensors();
    for (std::size_t i = 0; i < na.size(); ++i) EXPECT_EQ(na[i].second->values(), nc[i].second->values());
}

TEST(ParallelFor, CoversRangeAndPropagatesErrors) {
    std::vector<int> hits(100, 0);
    net::parallel_for(100, 4, [&](std::size_t i) { hits[i] += 1; });
    for (int h : hits) EXPECT_EQ(h, 1);
    EXPECT_THROW(net::parallel_for(10, 2,
                                   [](std::size_t i) {
                                       if (i == 7) throw InputError("boom");
                                   }),
                 InputError);
}
