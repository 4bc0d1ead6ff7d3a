#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "kronmark/autograd.hpp"
#include "kronmark/tensor.hpp"

// Forward operations of the tensor engine.
//
// Each operation exists twice: a pure function over Tensors, and an overload
// taking a Tape that records the same computation together with its gradient
// rule. Both share one kernel, so taped and untaped results are identical.
//
// Reductions accumulate sequentially in row-major order. Dense products go
// through Eigen's GEMM, whose blocking order is fixed for a given build, so a
// forward pass is bit-reproducible for fixed inputs.
namespace kronmark::ops {

struct ConvGeometry {
    std::size_t stride = 1;
    std::size_t padding = 0;
};

// 2-D cross-correlation (the kernel is not flipped).
//   input [s,H,W], weight [d,s,k,k], bias [d] -> [d,Hout,Wout]
//   Hout = floor((H + 2*padding - k) / stride) + 1, likewise Wout.
// Out-of-range taps read zero.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias, ConvGeometry g = {});
template <typename T>
Var conv2d(Tape<T>& tape, Var input, Var weight, Var bias, ConvGeometry g = {});

template <typename T>
Tensor<T> relu(const Tensor<T>& x);
template <typename T>
Var relu(Tape<T>& tape, Var x);

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x);
template <typename T>
Var sigmoid(Tape<T>& tape, Var x);

// 2x2 max pooling with stride 2 over [c,H,W]; H and W must be even. The
// gradient goes to the first maximal cell of each window in row-major order.
template <typename T>
Tensor<T> maxpool2(const Tensor<T>& x);
template <typename T>
Var maxpool2(Tape<T>& tape, Var x);

// weight [out,m] times x plus bias. x is either [m] or a batch [B,m], in
// which case the result is [B,out].
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);
template <typename T>
Var linear(Tape<T>& tape, Var x, Var weight, Var bias);

// Per-channel softmax over the spatial cells of [c,H,W], computed as
// exp(x - max) / sum(exp(x - max)).
template <typename T>
Tensor<T> spatial_softmax(const Tensor<T>& x);
template <typename T>
Var spatial_softmax(Tape<T>& tape, Var x);

// Bilinear resampling of [c,H,W] to [c,out_h,out_w] with half-pixel centers
// (align_corners = false). Output cell j samples source coordinate
//   u = (j + 0.5) * H / out_h - 0.5,
// clamped to [0, H-1], interpolating between floor(u) and floor(u)+1.
template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& x, std::size_t out_h, std::size_t out_w);
template <typename T>
Var bilinear_resize(Tape<T>& tape, Var x, std::size_t out_h, std::size_t out_w);

// [c,H,W] -> [c], mean over the spatial cells.
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x);
template <typename T>
Var global_avg_pool(Tape<T>& tape, Var x);

// Kronecker product of a matrix A [p,q] with a filter block F [a,b,k,k]:
// the result [p*a, q*b, k, k] has block (i,j) equal to A[i,j] * F.
template <typename T>
Tensor<T> kron(const Tensor<T>& a, const Tensor<T>& f);
template <typename T>
Var kron(Tape<T>& tape, Var a, Var f);

// Swaps the two leading axes of a rank-4 tensor: [s,d,k,k] <-> [d,s,k,k].
template <typename T>
Tensor<T> swap_leading_axes(const Tensor<T>& x);
template <typename T>
Var swap_leading_axes(Tape<T>& tape, Var x);

template <typename T>
Var add(Tape<T>& tape, Var a, Var b);
template <typename T>
Var add_n(Tape<T>& tape, std::span<const Var> terms);
template <typename T>
Var scale(Tape<T>& tape, Var x, T factor);
template <typename T>
Var reshape(Tape<T>& tape, Var x, Shape shape);
// Sum of all elements, as a scalar.
template <typename T>
Var sum(Tape<T>& tape, Var x);
template <typename T>
Var mean(Tape<T>& tape, Var x);

// Mean squared error against a constant target of identical shape.
template <typename T>
Var mse_loss(Tape<T>& tape, Var pred, const Tensor<T>& target);

// Square-rooted Jensen-Shannon divergence between each predicted channel of
// [c,H,W] and the matching target channel, averaged over channels. Natural
// log; 0*log 0 is taken as 0.
template <typename T>
Var jsd_loss(Tape<T>& tape, Var pred, const Tensor<T>& target);

// sqrt(sum_i |p_i - g_i|^2) over all elements: the Euclidean distance between
// the stacked predicted and target points. The gradient at zero distance is
// taken as zero.
template <typename T>
Var euclidean_loss(Tape<T>& tape, Var pred, const Tensor<T>& target);

}  // namespace kronmark::ops
