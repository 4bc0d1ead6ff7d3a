#include "kronmark/adam.hpp"

#include <cmath>
#include <utility>

namespace kronmark {

template <typename T>
void adam_step(std::span<Tensor<T>* const> params, AdamState<T>& state) {
    if (state.first_moment.empty()) {
        for (const Tensor<T>* p : params) {
            state.first_moment.emplace_back(p->size(), T(0));
            state.second_moment.emplace_back(p->size(), T(0));
        }
    }
    if (state.first_moment.size() != params.size()) {
        throw DimensionError("adam_step: parameter count changed between steps");
    }
    ++state.step;
    const double b1 = state.beta1, b2 = state.beta2;
    const double corr1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double corr2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    const double step_size = state.learning_rate / corr1;

    for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor<T>& p = *params[k];
        auto& m = state.first_moment[k];
        auto& v = state.second_moment[k];
        if (m.size() != p.size()) throw DimensionError("adam_step: moment buffer does not match parameter shape");
        const bool has_grad = p.has_grad();
        auto g = std::as_const(p).grad();
        auto w = p.data();
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double gi = has_grad ? static_cast<double>(g[i]) : 0.0;
            const double mi = b1 * m[i] + (1.0 - b1) * gi;
            const double vi = b2 * v[i] + (1.0 - b2) * gi * gi;
            m[i] = static_cast<T>(mi);
            v[i] = static_cast<T>(vi);
            w[i] = static_cast<T>(w[i] - step_size * mi / (std::sqrt(vi / corr2) + state.epsilon));
        }
    }
}

template void adam_step<float>(std::span<Tensor<float>* const>, AdamState<float>&);
template void adam_step<double>(std::span<Tensor<double>* const>, AdamState<double>&);

}  // namespace kronmark
