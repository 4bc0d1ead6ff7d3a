#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "kronmark/errors.hpp"
#include "kronmark/morphometrics.hpp"
#include "kronmark/synth.hpp"
#include "support/eigen_oracle.hpp"

using namespace kronmark;
using namespace kronmark::morpho;

namespace {

LandmarkSet random_landmarks(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 320.0);
    LandmarkSet lm;
    for (auto& p : lm) p = {u(rng), u(rng)};
    return lm;
}

kronmark::testing::Dense to_dense(const Matrix& m) {
    kronmark::testing::Dense d(m.rows, std::vector<double>(m.cols));
    for (std::size_t r = 0; r < m.rows; ++r)
        for (std::size_t c = 0; c < m.cols; ++c) d[r][c] = m(r, c);
    return d;
}

void expect_matches_oracle(const Matrix& a, double tol) {
    auto eig = symmetric_eigen(a);
    auto dense = to_dense(a);
    auto values = kronmark::testing::eigenvalues(dense);
    ASSERT_EQ(values.size(), a.rows);
    for (std::size_t j = 0; j < a.rows; ++j) {
        EXPECT_NEAR(eig.values[j], values[j], tol);
        auto v = kronmark::testing::eigenvector(dense, values[j]);
        for (std::size_t i = 0; i < a.rows; ++i) EXPECT_NEAR(eig.vectors(i, j), v[i], tol);
    }
}

}  // namespace

TEST(Pairs, IndexingRoundTrip) {
    EXPECT_EQ(pair_of(0), (std::pair<std::size_t, std::size_t>{1, 2}));
    EXPECT_EQ(pair_of(10), (std::pair<std::size_t, std::size_t>{1, 12}));
    EXPECT_EQ(pair_of(11), (std::pair<std::size_t, std::size_t>{2, 3}));
    EXPECT_EQ(pair_of(65), (std::pair<std::size_t, std::size_t>{11, 12}));
    for (std::size_t k = 0; k < kPairCount; ++k) {
        auto [i, j] = pair_of(k);
        EXPECT_EQ(pair_index(i, j), k);
    }
    auto header = distance_header();
    ASSERT_EQ(header.size(), 66u);
    EXPECT_EQ(header[0], "d_1_2");
    EXPECT_EQ(header[65], "d_11_12");
}

TEST(DistanceMatrix, Examples) {
    LandmarkSet same;
    same.fill({4.0, 5.0});
    for (double d : distance_matrix(same)) EXPECT_EQ(d, 0.0);
    LandmarkSet line;
    for (std::size_t i = 0; i < 12; ++i) line[i] = {double(i), 0.0};
    auto d = distance_matrix(line);
    for (std::size_t k = 0; k < kPairCount; ++k) {
        auto [i, j] = pair_of(k);
        EXPECT_EQ(d[k], double(j - i));
    }
}

TEST(DistanceMatrix, SwappingTwoLandmarksTouchesTheirEntriesOnly) {
    std::mt19937_64 rng(1);
    auto lm = random_landmarks(rng);
    auto base = distance_matrix(lm);
    std::swap(lm[2], lm[7]);
    auto swapped = distance_matrix(lm);
    std::size_t changed = 0;
    for (std::size_t k = 0; k < kPairCount; ++k) {
        auto [i, j] = pair_of(k);
        const bool involved = i == 3 || j == 3 || i == 8 || j == 8;
        if (base[k] != swapped[k]) {
            ++changed;
            EXPECT_TRUE(involved);
        }
    }
    // (3,8) keeps its length; the other 20 entries touching 3 or 8 move.
    EXPECT_EQ(changed, 11u + 11u - 1u - 1u);
}

TEST(DistanceMatrix, RigidMotionInvariant) {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> ang(-3.14, 3.14), shift(-100, 100);
    for (int t = 0; t < 100; ++t) {
        auto lm = random_landmarks(rng);
        const double a = ang(rng), tx = shift(rng), ty = shift(rng);
        auto moved = lm;
        for (auto& p : moved) p = {std::cos(a) * p.x - std::sin(a) * p.y + tx, std::sin(a) * p.x + std::cos(a) * p.y + ty};
        auto d0 = distance_matrix(lm), d1 = distance_matrix(moved);
        for (std::size_t k = 0; k < kPairCount; ++k) EXPECT_NEAR(d0[k], d1[k], 1e-9);
    }
}

TEST(Traits, Examples) {
    LandmarkSet same;
    same.fill({1.0, 1.0});
    for (double v : extract_traits(same, 0.5).values()) EXPECT_EQ(v, 0.0);
    LandmarkSet lm{};
    lm[2] = {100.0, 0.0};
    EXPECT_EQ(extract_traits(lm, 0.5).total_length, 50.0);
    EXPECT_THROW(extract_traits(lm, 0.0), ContractError);
}

TEST(Traits, LinearInScaleAndConsistentWithDistances) {
    std::mt19937_64 rng(3);
    for (int t = 0; t < 100; ++t) {
        auto lm = random_landmarks(rng);
        const double mm = 0.3 + 0.01 * t;
        auto a = extract_traits(lm, mm), b = extract_traits(lm, 2 * mm);
        for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(b.values()[i], 2 * a.values()[i]);
        auto d = distance_matrix(lm);
        EXPECT_EQ(a.total_length, d[pair_index(1, 3)] * mm);
        EXPECT_EQ(a.body_length, d[pair_index(1, 2)] * mm);
        EXPECT_EQ(a.first_ash, d[pair_index(7, 8)] * mm);
        EXPECT_EQ(a.third_ash, d[pair_index(9, 10)] * mm);
        EXPECT_EQ(a.last_ash, d[pair_index(11, 12)] * mm);
    }
}

TEST(Pearson, Examples) {
    std::vector<double> x{1, 4, 2, 8}, neg{-1, -4, -2, -8};
    EXPECT_NEAR(pearson(x, x), 1.0, 1e-15);
    EXPECT_NEAR(pearson(x, neg), -1.0, 1e-15);
    std::vector<double> a{1, 2, 4}, b{2, 1, 7};
    const double ma = 7.0 / 3.0, mb = 10.0 / 3.0;
    double sab = 0, saa = 0, sbb = 0;
    for (int i = 0; i < 3; ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    EXPECT_NEAR(pearson(a, b), sab / std::sqrt(saa * sbb), 1e-12);
}

TEST(CorrelationMatrix, DuplicatedTraitAndErrors) {
    std::vector<TraitVector> t{{1, 1, 3, 2, 1}, {2, 2, 1, 5, 2}, {4, 4, 2, 1, 3}};
    auto m = correlation_matrix(t);
    EXPECT_NEAR(m[0][1], 1.0, 1e-15);
    for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(m[i][i], 1.0, 1e-15);
    EXPECT_THROW(correlation_matrix({t[0], t[1]}), InputError);
    std::vector<TraitVector> flat{{1, 1, 1, 1, 1}, {1, 2, 2, 2, 2}, {1, 3, 1, 3, 3}};
    EXPECT_THROW(correlation_matrix(flat), UndefinedMetricError);
}

TEST(SymmetricEigen, HandMatrixMatchesCharacteristicPolynomial) {
    Matrix data(4, 3);
    const double rows[4][3] = {{2, 0, 1}, {3, 1, 0}, {5, 1, 4}, {7, 4, 2}};
    for (std::size_t r = 0; r < 4; ++r)
        for (std::size_t c = 0; c < 3; ++c) data(r, c) = rows[r][c];
    expect_matches_oracle(covariance(data), 1e-8);
}

TEST(SymmetricEigen, RandomCovariancesMatchCharacteristicPolynomial) {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int t = 0; t < 20; ++t) {
        Matrix data(30, 5);
        for (std::size_t r = 0; r < 30; ++r)
            for (std::size_t c = 0; c < 5; ++c) data(r, c) = n(rng) * double(c + 1);
        expect_matches_oracle(covariance(data), 1e-8);
    }
}

TEST(SymmetricEigen, ReconstructsMatrix) {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n(0.0, 1.0);
    Matrix a(8, 8);
    for (std::size_t i = 0; i < 8; ++i)
        for (std::size_t j = i; j < 8; ++j) a(i, j) = a(j, i) = n(rng);
    auto e = symmetric_eigen(a);
    for (std::size_t i = 0; i < 8; ++i)
        for (std::size_t j = 0; j < 8; ++j) {
            double acc = 0;
            for (std::size_t k = 0; k < 8; ++k) acc += e.vectors(i, k) * e.values[k] * e.vectors(j, k);
            EXPECT_NEAR(acc, a(i, j), 1e-10);
        }
    for (std::size_t k = 1; k < 8; ++k) EXPECT_GE(e.values[k - 1], e.values[k]);
}

TEST(Pca, LineDataHasOneComponent) {
    std::vector<DistanceMatrix> rows;
    DistanceMatrix dir;
    for (std::size_t k = 0; k < kPairCount; ++k) dir[k] = 1.0 + double(k % 7);
    for (int i = 0; i < 10; ++i) {
        DistanceMatrix r;
        for (std::size_t k = 0; k < kPairCount; ++k) r[k] = 5.0 + 0.3 * double(i) * dir[k];
        rows.push_back(r);
    }
    auto p = pca(to_matrix(rows));
    EXPECT_NEAR(p.proportion[0], 1.0, 1e-12);
}

TEST(Pca, IsotropicPlaneSplitsVarianceEvenly) {
    Matrix data(8, 3, 0.0);
    for (std::size_t i = 0; i < 8; ++i) {
        const double a = 2.0 * M_PI * double(i) / 8.0;
        data(i, 0) = std::cos(a);
        data(i, 1) = std::sin(a);
        data(i, 2) = 1.0;
    }
    auto p = pca(data);
    EXPECT_NEAR(p.proportion[0], 0.5, 1e-9);
    EXPECT_NEAR(p.proportion[1], 0.5, 1e-9);
}

TEST(Pca, ProportionsAndReconstruction) {
    std::mt19937_64 rng(6);
    std::normal_distribution<double> n(0.0, 1.0);
    Matrix data(40, 9);
    for (std::size_t r = 0; r < 40; ++r)
        for (std::size_t c = 0; c < 9; ++c) data(r, c) = n(rng) * (1.0 + c) + 3.0;
    auto p = pca(data);
    double s = 0;
    for (std::size_t k = 0; k < p.proportion.size(); ++k) {
        s += p.proportion[k];
        if (k) {
            EXPECT_LE(p.proportion[k], p.proportion[k - 1]);
            EXPECT_GE(p.cumulative[k], p.cumulative[k - 1]);
        }
    }
    EXPECT_NEAR(s, 1.0, 1e-9);
    auto rec = p.reconstruct(p.proportion.size());
    for (std::size_t r = 0; r < 40; ++r)
        for (std::size_t c = 0; c < 9; ++c) EXPECT_NEAR(rec(r, c), data(r, c) - p.mean[c], 1e-8);
    auto proj = p.project(data);
    for (std::size_t i = 0; i < proj.data.size(); ++i) EXPECT_NEAR(proj.data[i], p.scores.data[i], 1e-10);
    EXPECT_THROW(pca(Matrix(1, 3)), InputError);
    EXPECT_THROW(pca(data, 40), ContractError);
}

TEST(Pca, SizeDominatedSyntheticData) {
    synth::GeneratorConfig g;
    auto recs = synth::generate_dataset(g, 120);
    std::vector<DistanceMatrix> rows;
    for (const auto& r : recs) rows.push_back(distance_matrix(r.landmarks));
    auto p = pca(to_matrix(rows));
    EXPECT_GT(p.proportion[0], 0.8);
}
