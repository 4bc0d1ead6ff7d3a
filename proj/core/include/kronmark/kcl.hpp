#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "kronmark/autograd.hpp"
#include "kronmark/ops.hpp"
#include "kronmark/tensor.hpp"

// Kronecker convolution layer.
//
// The layer weight H (in_channels x out_channels x k x k) is never stored; it
// is rebuilt on every forward pass as
//
//     H = sum_{i=1..n} A_i (x) F_i,
//
// where each A_i is an n x n matrix and each F_i a block of
// (s/n) x (d/n) x k x k filters. The learnable scalar count is
// n^3 + s*d*k^2/n instead of s*d*k^2 for a dense convolution. With n = 1 the
// layer is an ordinary convolution scaled by the single entry of A_1.
namespace kronmark {

struct KclShape {
    std::size_t in_channels = 0;   // s
    std::size_t out_channels = 0;  // d
    std::size_t kernel = 3;        // k
    std::size_t order = 1;         // n
};

// Throws ConfigError unless every extent is positive and n divides s and d.
void validate(const KclShape& shape);

template <typename T>
struct KclParams {
    KclShape shape;
    std::vector<Tensor<T>> algebra;  // n tensors [n,n]
    std::vector<Tensor<T>> filters;  // n tensors [s/n, d/n, k, k]
    Tensor<T> bias;                  // [d]

    std::size_t learnable_count() const;
    std::vector<Tensor<T>*> tensors();
};

// A_i = I / sqrt(n); F_i uniform in +-sqrt(6 / fan_in) with fan_in = (s/n)*k*k,
// the fan-in of one output channel of the block-diagonal H produced at init;
// zero bias.
template <typename T>
KclParams<T> init_kcl(const KclShape& shape, std::mt19937_64& rng);

// H as [s, d, k, k].
template <typename T>
Tensor<T> assemble_weight(const KclParams<T>& params);

// Tape handles for one layer's learnable tensors.
struct KclVars {
    std::vector<Var> algebra;
    std::vector<Var> filters;
    Var bias;
};

template <typename T>
KclVars bind(Tape<T>& tape, KclParams<T>& params);

template <typename T>
Var assemble_weight(Tape<T>& tape, const KclVars& vars);

// conv2d(input, H re-laid out as [d, s, k, k], bias).
template <typename T>
Tensor<T> kcl_forward(const Tensor<T>& input, const KclParams<T>& params, ops::ConvGeometry g);
template <typename T>
Var kcl_forward(Tape<T>& tape, Var input, const KclVars& vars, ops::ConvGeometry g);

struct LayerCost {
    std::uint64_t param_count = 0;
    std::uint64_t flop_count = 0;
};

// n^3 + s*d*k^2/n, plus d when with_bias. Throws ConfigError when n does not
// divide s and d.
std::uint64_t count_params(std::size_t s, std::size_t d, std::size_t k, std::size_t n, bool with_bias);
// s*d*k^2, plus d when with_bias.
std::uint64_t count_dense_params(std::size_t s, std::size_t d, std::size_t k, bool with_bias);

// FLOPs of one forward pass at a stride-1, same-padded h x w input, counting
// one multiply-accumulate as 2 FLOPs:
//     2 * h * w * d * s * k^2   (convolution)
//   + n * s * d * k^2           (building H from the Kronecker terms)
// Bias additions are not counted.
std::uint64_t count_flops(std::size_t s, std::size_t d, std::size_t k, std::size_t n, std::size_t h, std::size_t w);

LayerCost layer_cost(const KclShape& shape, std::size_t h, std::size_t w, bool with_bias = true);

}  // namespace kronmark
