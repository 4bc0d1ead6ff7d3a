#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "kronmark/tensor.hpp"

namespace kronmark {

// Bias-corrected Adam.
template <typename T>
struct AdamState {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t step = 0;
    std::vector<std::vector<T>> first_moment;
    std::vector<std::vector<T>> second_moment;
};

// One update of every tensor in `params` from its gradient buffer. Moment
// buffers are created on the first call and must keep matching shapes
// afterwards. Tensors without a gradient buffer are treated as having zero
// gradient.
template <typename T>
void adam_step(std::span<Tensor<T>* const> params, AdamState<T>& state);

extern template void adam_step<float>(std::span<Tensor<float>* const>, AdamState<float>&);
extern template void adam_step<double>(std::span<Tensor<double>* const>, AdamState<double>&);

}  // namespace kronmark
