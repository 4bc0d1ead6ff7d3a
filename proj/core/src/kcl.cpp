#include "kronmark/kcl.hpp"

#include <cmath>
#include <string>

namespace kronmark {

void validate(const KclShape& shape) {
    const auto& [s, d, k, n] = shape;
    if (s == 0 || d == 0 || k == 0 || n == 0) throw ConfigError("kcl: extents and order must be positive");
    if (s % n != 0 || d % n != 0) {
        throw ConfigError("kcl: order n=" + std::to_string(n) + " must divide s=" + std::to_string(s) +
                          " and d=" + std::to_string(d));
    }
}

template <typename T>
std::size_t KclParams<T>::learnable_count() const {
    std::size_t total = bias.size();
    for (const auto& a : algebra) total += a.size();
    for (const auto& f : filters) total += f.size();
    return total;
}

template <typename T>
std::vector<Tensor<T>*> KclParams<T>::tensors() {
    std::vector<Tensor<T>*> out;
    for (auto& a : algebra) out.push_back(&a);
    for (auto& f : filters) out.push_back(&f);
    out.push_back(&bias);
    return out;
}

template <typename T>
KclParams<T> init_kcl(const KclShape& shape, std::mt19937_64& rng) {
    validate(shape);
    const auto& [s, d, k, n] = shape;
    KclParams<T> p;
    p.shape = shape;
    const T diag = static_cast<T>(1.0 / std::sqrt(static_cast<double>(n)));
    const double fan_in = static_cast<double>(s / n * k * k);
    std::uniform_real_distribution<double> dist(-std::sqrt(6.0 / fan_in), std::sqrt(6.0 / fan_in));
    for (std::size_t i = 0; i < n; ++i) {
        Tensor<T> a(Shape{n, n});
        for (std::size_t r = 0; r < n; ++r) a[r * n + r] = diag;
        p.algebra.push_back(std::move(a));
        Tensor<T> f(Shape{s / n, d / n, k, k});
        for (auto& v : f.data()) v = static_cast<T>(dist(rng));
        p.filters.push_back(std::move(f));
    }
    p.bias = Tensor<T>(Shape{d});
    return p;
}

template <typename T>
Tensor<T> assemble_weight(const KclParams<T>& params) {
    validate(params.shape);
    const auto& [s, d, k, n] = params.shape;
    if (params.algebra.size() != n || params.filters.size() != n) {
        throw ConfigError("kcl: expected " + std::to_string(n) + " algebra matrices and filter blocks");
    }
    Tensor<T> h(Shape{s, d, k, k});
    for (std::size_t i = 0; i < n; ++i) {
        Tensor<T> term = ops::kron(params.algebra[i], params.filters[i]);
        if (term.shape() != h.shape()) throw DimensionError("kcl: Kronecker term has shape " + shape_string(term.shape()));
        for (std::size_t j = 0; j < h.size(); ++j) h[j] += term[j];
    }
    return h;
}

template <typename T>
KclVars bind(Tape<T>& tape, KclParams<T>& params) {
    KclVars v;
    for (auto& a : params.algebra) v.algebra.push_back(tape.parameter(a));
    for (auto& f : params.filters) v.filters.push_back(tape.parameter(f));
    v.bias = tape.parameter(params.bias);
    return v;
}

template <typename T>
Var assemble_weight(Tape<T>& tape, const KclVars& vars) {
    std::vector<Var> terms;
    for (std::size_t i = 0; i < vars.algebra.size(); ++i) terms.push_back(ops::kron(tape, vars.algebra[i], vars.filters[i]));
    return terms.size() == 1 ? terms[0] : ops::add_n<T>(tape, terms);
}

template <typename T>
Tensor<T> kcl_forward(const Tensor<T>& input, const KclParams<T>& params, ops::ConvGeometry g) {
    return ops::conv2d(input, ops::swap_leading_axes(assemble_weight(params)), params.bias, g);
}

template <typename T>
Var kcl_forward(Tape<T>& tape, Var input, const KclVars& vars, ops::ConvGeometry g) {
    Var weight = ops::swap_leading_axes(tape, assemble_weight(tape, vars));
    return ops::conv2d(tape, input, weight, vars.bias, g);
}

std::uint64_t count_params(std::size_t s, std::size_t d, std::size_t k, std::size_t n, bool with_bias) {
    validate(KclShape{s, d, k, n});
    const std::uint64_t nn = n;
    return nn * nn * nn + static_cast<std::uint64_t>(s) * d * k * k / n + (with_bias ? d : 0);
}

std::uint64_t count_dense_params(std::size_t s, std::size_t d, std::size_t k, bool with_bias) {
    return static_cast<std::uint64_t>(s) * d * k * k + (with_bias ? d : 0);
}

std::uint64_t count_flops(std::size_t s, std::size_t d, std::size_t k, std::size_t n, std::size_t h, std::size_t w) {
    validate(KclShape{s, d, k, n});
    const std::uint64_t weight_size = static_cast<std::uint64_t>(s) * d * k * k;
    return 2 * static_cast<std::uint64_t>(h) * w * weight_size + n * weight_size;
}

LayerCost layer_cost(const KclShape& shape, std::size_t h, std::size_t w, bool with_bias) {
    return {count_params(shape.in_channels, shape.out_channels, shape.kernel, shape.order, with_bias),
            count_flops(shape.in_channels, shape.out_channels, shape.kernel, shape.order, h, w)};
}

#define KRONMARK_INSTANTIATE_KCL(T)                                                          \
    template struct KclParams<T>;                                                            \
    template KclParams<T> init_kcl<T>(const KclShape&, std::mt19937_64&);                    \
    template Tensor<T> assemble_weight<T>(const KclParams<T>&);                              \
    template KclVars bind<T>(Tape<T>&, KclParams<T>&);                                       \
    template Var assemble_weight<T>(Tape<T>&, const KclVars&);                               \
    template Tensor<T> kcl_forward<T>(const Tensor<T>&, const KclParams<T>&, ops::ConvGeometry); \
    template Var kcl_forward<T>(Tape<T>&, Var, const KclVars&, ops::ConvGeometry);

KRONMARK_INSTANTIATE_KCL(float)
KRONMARK_INSTANTIATE_KCL(double)

}  // namespace kronmark
