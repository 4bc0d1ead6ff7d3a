#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "kronmark/landmarks.hpp"

namespace kronmark::morpho {

inline constexpr std::size_t kPairCount = kLandmarkCount * (kLandmarkCount - 1) / 2;  // 66

using DistanceMatrix = std::array<double, kPairCount>;

// 1-based landmark pair of each entry, (1,2), (1,3), ..., (11,12).
std::pair<std::size_t, std::size_t> pair_of(std::size_t index);
// Inverse of pair_of for 1 <= i < j <= 12.
std::size_t pair_index(std::size_t i, std::size_t j);
// "d_i_j" column names in entry order.
std::vector<std::string> distance_header();

DistanceMatrix distance_matrix(const LandmarkSet& lm);

struct TraitVector {
    double total_length = 0.0;  // 1-3
    double body_length = 0.0;   // 1-2
    double first_ash = 0.0;     // 7-8
    double third_ash = 0.0;     // 9-10
    double last_ash = 0.0;      // 11-12

    std::array<double, 5> values() const { return {total_length, body_length, first_ash, third_ash, last_ash}; }
};

inline constexpr std::array<const char*, 5> kTraitNames = {"total_length", "body_length", "first_ash", "third_ash",
                                                           "last_ash"};

// Throws ContractError for mm_per_px <= 0.
TraitVector extract_traits(const LandmarkSet& lm, double mm_per_px);

using Matrix5 = std::array<std::array<double, 5>, 5>;

// Pearson correlation between traits. Throws InputError below 3 specimens and
// UndefinedMetricError when a trait is constant.
Matrix5 correlation_matrix(const std::vector<TraitVector>& traits);
double pearson(const std::vector<double>& x, const std::vector<double>& y);

// Row-major rows x cols.
struct Matrix {
    std::size_t rows = 0, cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}
    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

struct EigenDecomposition {
    std::vector<double> values;  // descending
    Matrix vectors;              // column j pairs with values[j]
    std::size_t sweeps = 0;
};

// Cyclic Jacobi on a symmetric matrix until the off-diagonal Frobenius norm
// drops below tolerance * max(1, ||A||_F). Eigenvectors are sign-normalized so that the
// largest-magnitude entry is positive (the first one on ties).
EigenDecomposition symmetric_eigen(const Matrix& a, double tolerance = 1e-12, std::size_t max_sweeps = 100);

// Sample covariance (n - 1 denominator) of the columns.
Matrix covariance(const Matrix& data, std::vector<double>* means = nullptr);

struct PcaResult {
    std::vector<double> mean;        // per variable
    Matrix loadings;                 // variables x components, orthonormal columns
    std::vector<double> sd;          // per component
    std::vector<double> proportion;  // of the total variance
    std::vector<double> cumulative;
    Matrix scores;                   // specimens x components

    // Centered data reconstructed from the first `components` scores.
    Matrix reconstruct(std::size_t components) const;
    // Scores of new rows.
    Matrix project(const Matrix& data) const;
};

// Covariance PCA. n_components = 0 keeps all. Proportions are relative to
// the variance of every component, kept or not. Throws InputError below two
// specimens and ContractError when n_components exceeds min(rows - 1, cols).
PcaResult pca(const Matrix& data, std::size_t n_components = 0);

Matrix to_matrix(const std::vector<DistanceMatrix>& rows);

}  // namespace kronmark::morpho
