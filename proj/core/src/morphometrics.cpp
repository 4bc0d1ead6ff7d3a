#include "kronmark/morphometrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "kronmark/errors.hpp"

namespace kronmark::morpho {

std::pair<std::size_t, std::size_t> pair_of(std::size_t index) {
    if (index >= kPairCount) throw DimensionError("pair_of: index " + std::to_string(index) + " out of range");
    for (std::size_t i = 1; i < kLandmarkCount; ++i) {
        const std::size_t row = kLandmarkCount - i;
        if (index < row) return {i, i + 1 + index};
        index -= row;
    }
    return {0, 0};
}

std::size_t pair_index(std::size_t i, std::size_t j) {
    if (!(1 <= i && i < j && j <= kLandmarkCount)) {
        throw DimensionError("pair_index: need 1 <= i < j <= 12, got (" + std::to_string(i) + "," + std::to_string(j) + ")");
    }
    // entries before row i: sum_{r<i} (12 - r)
    const std::size_t before = (i - 1) * kLandmarkCount - (i - 1) * i / 2;
    return before + (j - i - 1);
}

std::vector<std::string> distance_header() {
    std::vector<std::string> h;
    for (std::size_t k = 0; k < kPairCount; ++k) {
        const auto [i, j] = pair_of(k);
        h.push_back("d_" + std::to_string(i) + "_" + std::to_string(j));
    }
    return h;
}

DistanceMatrix distance_matrix(const LandmarkSet& lm) {
    DistanceMatrix d{};
    std::size_t k = 0;
    for (std::size_t i = 0; i < kLandmarkCount; ++i)
        for (std::size_t j = i + 1; j < kLandmarkCount; ++j) d[k++] = std::hypot(lm[i].x - lm[j].x, lm[i].y - lm[j].y);
    return d;
}

TraitVector extract_traits(const LandmarkSet& lm, double mm_per_px) {
    if (!(mm_per_px > 0.0) || !std::isfinite(mm_per_px)) throw ContractError("extract_traits: mm_per_px must be > 0");
    const DistanceMatrix d = distance_matrix(lm);
    auto at = [&](std::size_t i, std::size_t j) { return d[pair_index(i, j)] * mm_per_px; };
    return {at(1, 3), at(1, 2), at(7, 8), at(9, 10), at(11, 12)};
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw DimensionError("pearson: length mismatch");
    if (x.size() < 3) throw InputError("pearson: need at least 3 specimens");
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) throw UndefinedMetricError("pearson: correlation undefined for a constant series");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

Matrix5 correlation_matrix(const std::vector<TraitVector>& traits) {
    if (traits.size() < 3) throw InputError("correlation_matrix: need at least 3 specimens");
    std::array<std::vector<double>, 5> cols;
    for (const auto& t : traits) {
        const auto v = t.values();
        for (std::size_t k = 0; k < 5; ++k) cols[k].push_back(v[k]);
    }
    for (std::size_t k = 0; k < 5; ++k) {
        if (std::all_of(cols[k].begin(), cols[k].end(), [&](double v) { return v == cols[k][0]; })) {
            throw UndefinedMetricError(std::string("correlation_matrix: trait '") + kTraitNames[k] + "' is constant");
        }
    }
    Matrix5 r{};
    for (std::size_t a = 0; a < 5; ++a) {
        r[a][a] = 1.0;
        for (std::size_t b = a + 1; b < 5; ++b) r[a][b] = r[b][a] = pearson(cols[a], cols[b]);
    }
    return r;
}

namespace {

double off_diagonal_norm(const Matrix& a) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.cols; ++j)
            if (i != j) s += a(i, j) * a(i, j);
    return std::sqrt(s);
}

}  // namespace

EigenDecomposition symmetric_eigen(const Matrix& input, double tolerance, std::size_t max_sweeps) {
    if (input.rows != input.cols || input.rows == 0) throw DimensionError("symmetric_eigen: matrix must be square");
    const std::size_t n = input.rows;
    Matrix a = input;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            if (std::abs(a(i, j) - a(j, i)) > 1e-9 * (1.0 + std::abs(a(i, j)))) {
                throw ContractError("symmetric_eigen: matrix is not symmetric");
            }
            a(i, j) = a(j, i) = 0.5 * (a(i, j) + a(j, i));
        }
    Matrix v(n, n);
    for (std::size_t i = 0; i < n; ++i) v(i, i) = 1.0;

    double frob = 0.0;
    for (double x : a.data) frob += x * x;
    const double stop = tolerance * std::max(1.0, std::sqrt(frob));
    EigenDecomposition out;
    while (off_diagonal_norm(a) >= stop) {
        if (out.sweeps == max_sweeps) throw ContractError("symmetric_eigen: Jacobi iteration did not converge");
        ++out.sweeps;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                a(p, q) = a(q, p) = 0.0;
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return a(x, x) > a(y, y); });
    out.vectors = Matrix(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        const std::size_t src = order[j];
        out.values.push_back(a(src, src));
        std::size_t big = 0;
        for (std::size_t k = 1; k < n; ++k)
            if (std::abs(v(k, src)) > std::abs(v(big, src)) + 1e-12) big = k;
        const double sign = v(big, src) < 0.0 ? -1.0 : 1.0;
        for (std::size_t k = 0; k < n; ++k) out.vectors(k, j) = sign * v(k, src);
    }
    return out;
}

Matrix covariance(const Matrix& data, std::vector<double>* means) {
    if (data.rows < 2) throw InputError("covariance: need at least two specimens");
    const std::size_t n = data.rows, p = data.cols;
    std::vector<double> mu(p, 0.0);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < p; ++c) mu[c] += data(r, c);
    for (auto& m : mu) m /= static_cast<double>(n);
    Matrix cov(p, p);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t i = 0; i < p; ++i) {
            const double di = data(r, i) - mu[i];
            for (std::size_t j = i; j < p; ++j) cov(i, j) += di * (data(r, j) - mu[j]);
        }
    for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = i; j < p; ++j) cov(j, i) = cov(i, j) = cov(i, j) / static_cast<double>(n - 1);
    if (means) *means = std::move(mu);
    return cov;
}

PcaResult pca(const Matrix& data, std::size_t n_components) {
    if (data.rows < 2) throw InputError("pca: need at least two specimens, got " + std::to_string(data.rows));
    const std::size_t limit = std::min(data.rows - 1, data.cols);
    if (n_components == 0) n_components = limit;
    if (n_components > limit) {
        throw ContractError("pca: " + std::to_string(n_components) + " components requested, at most " +
                            std::to_string(limit) + " available");
    }
    PcaResult r;
    const Matrix cov = covariance(data, &r.mean);
    const EigenDecomposition e = symmetric_eigen(cov);
    double total = 0.0;
    for (double v : e.values) total += std::max(v, 0.0);
    r.loadings = Matrix(data.cols, n_components);
    double cum = 0.0;
    for (std::size_t j = 0; j < n_components; ++j) {
        const double var = std::max(e.values[j], 0.0);
        for (std::size_t k = 0; k < data.cols; ++k) r.loadings(k, j) = e.vectors(k, j);
        r.sd.push_back(std::sqrt(var));
        r.proportion.push_back(total > 0.0 ? var / total : 0.0);
        cum += r.proportion.back();
        r.cumulative.push_back(cum);
    }
    r.scores = r.project(data);
    return r;
}

Matrix PcaResult::project(const Matrix& data) const {
    if (data.cols != mean.size()) throw DimensionError("pca: projected data has the wrong number of variables");
    Matrix s(data.rows, loadings.cols);
    for (std::size_t r = 0; r < data.rows; ++r)
        for (std::size_t j = 0; j < loadings.cols; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < data.cols; ++k) acc += (data(r, k) - mean[k]) * loadings(k, j);
            s(r, j) = acc;
        }
    return s;
}

Matrix PcaResult::reconstruct(std::size_t components) const {
    components = std::min(components, loadings.cols);
    Matrix out(scores.rows, loadings.rows);
    for (std::size_t r = 0; r < scores.rows; ++r)
        for (std::size_t k = 0; k < loadings.rows; ++k) {
            double acc = 0.0;
            for (std::size_t j = 0; j < components; ++j) acc += scores(r, j) * loadings(k, j);
            out(r, k) = acc;
        }
    return out;
}

Matrix to_matrix(const std::vector<DistanceMatrix>& rows) {
    Matrix m(rows.size(), kPairCount);
    for (std::size_t r = 0; r < rows.size(); ++r) std::copy(rows[r].begin(), rows[r].end(), m.data.begin() + r * kPairCount);
    return m;
}

}  // namespace kronmark::morpho
