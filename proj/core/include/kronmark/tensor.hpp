#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "kronmark/errors.hpp"

namespace kronmark {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape);

// Dense row-major array of reals with an optional gradient buffer.
//
// Values are stored contiguously in row-major order; the last extent varies
// fastest. A tensor of rank 0 holds a single scalar. The gradient buffer,
// when allocated, always has the same extents as the values.
template <typename T>
class Tensor {
   public:
    using value_type = T;

    Tensor() : shape_{}, data_(1, T(0)) {}

    explicit Tensor(Shape shape, T fill = T(0)) : shape_(std::move(shape)) {
        check_extents();
        data_.assign(shape_size(shape_), fill);
    }

    Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
        check_extents();
        if (data_.size() != shape_size(shape_)) {
            throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                                 " does not match shape " + shape_string(shape_));
        }
    }

    static Tensor scalar(T value) { return Tensor(Shape{}, std::vector<T>{value}); }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t extent(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const noexcept { return data_.size(); }

    std::span<T> data() noexcept { return data_; }
    std::span<const T> data() const noexcept { return data_; }
    const std::vector<T>& values() const noexcept { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    T item() const {
        if (data_.size() != 1) throw DimensionError("item() on non-scalar tensor " + shape_string(shape_));
        return data_[0];
    }

    bool requires_grad() const noexcept { return requires_grad_; }
    void set_requires_grad(bool flag) { requires_grad_ = flag; }

    bool has_grad() const noexcept { return !grad_.empty(); }
    std::span<T> grad() {
        ensure_grad();
        return grad_;
    }
    std::span<const T> grad() const noexcept { return grad_; }
    void zero_grad() { grad_.assign(data_.size(), T(0)); }
    void clear_grad() {
        grad_.clear();
        grad_.shrink_to_fit();
    }

    // Same values under new extents with an equal element count.
    Tensor reshaped(Shape shape) const& {
        Tensor out(std::move(shape), data_);
        return out;
    }

    template <typename U>
    Tensor<U> cast() const {
        std::vector<U> out(data_.begin(), data_.end());
        Tensor<U> t(shape_, std::move(out));
        t.set_requires_grad(requires_grad_);
        return t;
    }

    bool all_finite() const {
        for (T v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

   private:
    void check_extents() const {
        for (std::size_t e : shape_)
            if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_string(shape_));
    }
    void ensure_grad() {
        if (grad_.size() != data_.size()) grad_.assign(data_.size(), T(0));
    }

    Shape shape_;
    std::vector<T> data_;
    std::vector<T> grad_;
    bool requires_grad_ = false;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

inline std::string shape_string(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

}  // namespace kronmark
