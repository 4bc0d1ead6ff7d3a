#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "kronmark/errors.hpp"
#include "kronmark/kcl.hpp"
#include "kronmark/ops.hpp"
#include "support/gradcheck.hpp"
#include "support/kron_oracle.hpp"

using namespace kronmark;
using kronmark::testing::grad_check;
using kronmark::testing::kron_oracle;
using kronmark::testing::random_tensor;
using TD = Tensor<double>;

namespace {

// H[x, y] = sum_i A_i[x / (s/n), y / (d/n)] * F_i[x mod s/n, y mod d/n].
TD assemble_oracle(const KclParams<double>& p) {
    const auto& sh = p.shape;
    const std::size_t n = sh.order, bs = sh.in_channels / n, bd = sh.out_channels / n, kk = sh.kernel * sh.kernel;
    TD h(Shape{sh.in_channels, sh.out_channels, sh.kernel, sh.kernel}, 0.0);
    for (std::size_t t = 0; t < n; ++t)
        for (std::size_t x = 0; x < sh.in_channels; ++x)
            for (std::size_t y = 0; y < sh.out_channels; ++y)
                for (std::size_t e = 0; e < kk; ++e)
                    h[(x * sh.out_channels + y) * kk + e] +=
                        p.algebra[t][(x / bs) * n + y / bd] * p.filters[t][((x % bs) * bd + y % bd) * kk + e];
    return h;
}

KclParams<double> random_kcl(const KclShape& shape, std::mt19937_64& rng) {
    auto p = init_kcl<double>(shape, rng);
    for (auto& a : p.algebra) a = random_tensor(a.shape(), rng);
    for (auto& f : p.filters) f = random_tensor(f.shape(), rng);
    p.bias = random_tensor(p.bias.shape(), rng);
    return p;
}

}  // namespace

TEST(Kron, ScalarOneReturnsFilter) {
    std::mt19937_64 rng(1);
    TD a(Shape{1, 1}, 1.0);
    auto f = random_tensor(Shape{2, 3, 3, 3}, rng);
    EXPECT_EQ(ops::kron(a, f).values(), f.values());
}

TEST(Kron, ZeroMatrixGivesZeros) {
    std::mt19937_64 rng(2);
    TD a(Shape{2, 2}, 0.0);
    auto f = random_tensor(Shape{2, 3, 1, 1}, rng);
    auto h = ops::kron(a, f);
    EXPECT_EQ(h.shape(), (Shape{4, 6, 1, 1}));
    for (double v : h.data()) EXPECT_EQ(v, 0.0);
}

TEST(Kron, HandExample) {
    TD a(Shape{2, 2}, std::vector<double>{1, 2, 3, 4});
    TD f(Shape{2, 2, 1, 1}, std::vector<double>{0, 1, 1, 0});
    auto h = ops::kron(a, f);
    const std::vector<double> expect{0, 1, 0, 2, 1, 0, 2, 0, 0, 3, 0, 4, 3, 0, 4, 0};
    EXPECT_EQ(h.values(), expect);
}

TEST(Kron, MatchesDefinitionOracle) {
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<std::size_t> ext(1, 4);
    for (int t = 0; t < 100; ++t) {
        auto a = random_tensor(Shape{ext(rng), ext(rng)}, rng);
        auto f = random_tensor(Shape{ext(rng), ext(rng), ext(rng), ext(rng)}, rng);
        auto h = ops::kron(a, f);
        auto o = kron_oracle(a, f);
        ASSERT_EQ(h.shape(), o.shape());
        for (std::size_t i = 0; i < h.size(); ++i) EXPECT_EQ(h[i], o[i]);
    }
}

TEST(KclShapeValidation, RejectsBadShapes) {
    EXPECT_NO_THROW(validate(KclShape{6, 9, 3, 3}));
    EXPECT_THROW(validate(KclShape{4, 6, 3, 3}), ConfigError);
    EXPECT_THROW(validate(KclShape{0, 6, 3, 1}), ConfigError);
    EXPECT_THROW(validate(KclShape{3, 3, 0, 1}), ConfigError);
    EXPECT_THROW(validate(KclShape{3, 3, 3, 0}), ConfigError);
}

TEST(AssembleWeight, ScalarAlgebra) {
    std::mt19937_64 rng(4);
    auto p = random_kcl({4, 5, 3, 1}, rng);
    p.algebra[0][0] = -1.75;
    auto h = assemble_weight(p);
    for (std::size_t i = 0; i < h.size(); ++i) EXPECT_EQ(h[i], -1.75 * p.filters[0][i]);
}

TEST(AssembleWeight, IdentityAlgebraIsBlockDiagonal) {
    std::mt19937_64 rng(5);
    auto p = random_kcl({4, 6, 3, 2}, rng);
    p.algebra[0] = TD(Shape{2, 2}, std::vector<double>{1, 0, 0, 1});
    p.algebra[1] = TD(Shape{2, 2}, 0.0);
    auto h = assemble_weight(p);
    for (std::size_t x = 0; x < 4; ++x)
        for (std::size_t y = 0; y < 6; ++y)
            for (std::size_t e = 0; e < 9; ++e) {
                const bool diag = x / 2 == y / 3;
                const double expect = diag ? p.filters[0][((x % 2) * 3 + y % 3) * 9 + e] : 0.0;
                EXPECT_EQ(h[(x * 6 + y) * 9 + e], expect);
            }
}

TEST(AssembleWeight, MatchesSumOfKroneckerOracle) {
    std::mt19937_64 rng(6);
    for (std::size_t n : {2u, 3u}) {
        for (int t = 0; t < 10; ++t) {
            auto p = random_kcl({n * 2, n * 3, 3, n}, rng);
            auto h = assemble_weight(p);
            auto o = assemble_oracle(p);
            for (std::size_t i = 0; i < h.size(); ++i) EXPECT_NEAR(h[i], o[i], 1e-12);
        }
    }
}

TEST(AssembleWeight, LinearInEachFactor) {
    std::mt19937_64 rng(7);
    auto p = random_kcl({4, 4, 3, 2}, rng);
    auto q = p;
    auto r = p;
    q.algebra[1] = random_tensor(Shape{2, 2}, rng);
    r.algebra[1] = p.algebra[1];
    for (std::size_t i = 0; i < 4; ++i) r.algebra[1][i] = 2.0 * p.algebra[1][i] - 3.0 * q.algebra[1][i];
    auto hp = assemble_weight(p), hq = assemble_weight(q), hr = assemble_weight(r);
    // H is affine in A_1 with the other terms fixed: H(2a - 3b) = 2H(a) - 3H(b) + 2 * rest.
    auto p0 = p;
    p0.algebra[1] = TD(Shape{2, 2}, 0.0);
    auto rest = assemble_weight(p0);
    for (std::size_t i = 0; i < hr.size(); ++i) EXPECT_NEAR(hr[i], 2 * hp[i] - 3 * hq[i] + 2 * rest[i], 1e-12);

    auto f = p;
    f.filters[0] = random_tensor(p.filters[0].shape(), rng);
    auto g = p;
    for (std::size_t i = 0; i < g.filters[0].size(); ++i) g.filters[0][i] = p.filters[0][i] + f.filters[0][i];
    auto p1 = p;
    p1.filters[0] = TD(p.filters[0].shape(), 0.0);
    auto base = assemble_weight(p1), hf = assemble_weight(f), hg = assemble_weight(g);
    for (std::size_t i = 0; i < hg.size(); ++i) EXPECT_NEAR(hg[i], hp[i] + hf[i] - base[i], 1e-12);
}

TEST(KclForward, OrderOneEqualsDenseConv) {
    std::mt19937_64 rng(8);
    auto p = random_kcl({3, 4, 3, 1}, rng);
    auto x = random_tensor(Shape{3, 6, 6}, rng);
    TD w(p.filters[0].shape());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = p.algebra[0][0] * p.filters[0][i];
    auto ref = ops::conv2d(x, ops::swap_leading_axes(w), p.bias, {1, 1});
    auto y = kcl_forward(x, p, {1, 1});
    EXPECT_EQ(y.values(), ref.values());
}

TEST(KclForward, ZeroAlgebraGivesBias) {
    std::mt19937_64 rng(9);
    auto p = random_kcl({6, 6, 3, 3}, rng);
    for (auto& a : p.algebra) a = TD(a.shape(), 0.0);
    auto y = kcl_forward(random_tensor(Shape{6, 5, 5}, rng), p, {1, 1});
    for (std::size_t c = 0; c < 6; ++c)
        for (std::size_t i = 0; i < 25; ++i) EXPECT_EQ(y[c * 25 + i], p.bias[c]);
}

TEST(KclForward, MatchesConvOnAssembledWeight) {
    std::mt19937_64 rng(10);
    auto p = random_kcl({3, 3, 1, 3}, rng);
    auto x = random_tensor(Shape{3, 4, 4}, rng);
    auto ref = ops::conv2d(x, ops::swap_leading_axes(assemble_oracle(p)), p.bias);
    auto y = kcl_forward(x, p, {});
    for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], ref[i], 1e-10);
}

TEST(KclForward, TapedMatchesUntaped) {
    std::mt19937_64 rng(11);
    auto p = random_kcl({6, 9, 3, 3}, rng);
    auto x = random_tensor(Shape{6, 7, 7}, rng);
    Tape<double> tape;
    auto vars = bind(tape, p);
    auto y = kcl_forward(tape, tape.constant(x), vars, {1, 1});
    EXPECT_EQ(tape.value(y).values(), kcl_forward(x, p, {1, 1}).values());
}

TEST(KclForward, GradientsMatchFiniteDifferences) {
    std::mt19937_64 rng(12);
    for (std::size_t n : {1u, 2u, 3u}) {
        auto p = random_kcl({n * 2, n, 3, n}, rng);
        std::vector<TD> inputs{random_tensor(Shape{n * 2, 5, 5}, rng)};
        for (auto& a : p.algebra) inputs.push_back(a);
        for (auto& f : p.filters) inputs.push_back(f);
        inputs.push_back(p.bias);
        auto target = random_tensor(Shape{n, 5, 5}, rng);
        auto r = grad_check(
            inputs,
            [&](Tape<double>& tape, const std::vector<Var>& v) {
                KclVars kv;
                for (std::size_t i = 0; i < n; ++i) kv.algebra.push_back(v[1 + i]);
                for (std::size_t i = 0; i < n; ++i) kv.filters.push_back(v[1 + n + i]);
                kv.bias = v[1 + 2 * n];
                return ops::mse_loss(tape, kcl_forward(tape, v[0], kv, {1, 1}), target);
            },
            40, n);
        EXPECT_LT(r.max_rel_error, 1e-4) << "n=" << n;
    }
}

TEST(KclInit, ScaledIdentityAlgebraAndZeroBias) {
    std::mt19937_64 rng(13);
    auto p = init_kcl<double>({24, 48, 3, 3}, rng);
    ASSERT_EQ(p.algebra.size(), 3u);
    ASSERT_EQ(p.filters.size(), 3u);
    EXPECT_EQ(p.filters[0].shape(), (Shape{8, 16, 3, 3}));
    for (const auto& a : p.algebra)
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(a[i * 3 + j], i == j ? 1.0 / std::sqrt(3.0) : 0.0, 1e-15);
    const double bound = std::sqrt(6.0 / (8 * 9));
    for (const auto& f : p.filters)
        for (double v : f.data()) EXPECT_LE(std::abs(v), bound);
    for (double v : p.bias.data()) EXPECT_EQ(v, 0.0);
    EXPECT_EQ(p.learnable_count(), count_params(24, 48, 3, 3, true));
}

TEST(ParamCount, Examples) {
    EXPECT_EQ(count_params(4, 4, 3, 1, false), 145u);
    EXPECT_EQ(count_params(24, 24, 3, 3, false), 1755u);
    EXPECT_EQ(count_dense_params(24, 24, 3, false), 5184u);
    EXPECT_EQ(count_params(2, 2, 1, 2, false), 10u);
    EXPECT_EQ(count_dense_params(2, 2, 1, false), 4u);
    EXPECT_EQ(count_params(24, 24, 3, 3, true), 1755u + 24u);
    EXPECT_THROW(count_params(4, 6, 3, 3, false), ConfigError);
}

TEST(ParamCount, ReductionCondition) {
    for (std::size_t n = 1; n <= 4; ++n)
        for (std::size_t s = n; s <= 24; s += n)
            for (std::size_t d = n; d <= 24; d += n)
                for (std::size_t k : {1u, 3u}) {
                    const double lhs = double(s * d * k * k) * (1.0 - 1.0 / double(n));
                    const double rhs = double(n * n * n) - 1.0;
                    if (lhs > rhs) EXPECT_LT(count_params(s, d, k, n, false), count_params(s, d, k, 1, false));
                }
}

TEST(FlopCount, Examples) {
    EXPECT_EQ(count_flops(1, 1, 1, 1, 1, 1), 3u);
    const auto a = count_flops(24, 24, 3, 3, 40, 40), b = count_flops(24, 24, 3, 3, 80, 80);
    const std::uint64_t assembly = 3 * 24 * 24 * 9;
    EXPECT_EQ(b - assembly, 4 * (a - assembly));
    auto c = layer_cost({24, 24, 3, 3}, 40, 40);
    EXPECT_EQ(c.param_count, 1779u);
    EXPECT_EQ(c.flop_count, a);
}
