#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "kronmark/tensor.hpp"

namespace kronmark {

// Handle to a value recorded on a Tape.
struct Var {
    std::size_t index = 0;
};

// Reverse-mode tape.
//
// Every recorded operation appends one node holding its output value, the
// handles of its inputs and a local gradient rule. Since an operation can only
// consume values that already exist, append order is a topological order and
// backward() simply walks the nodes in reverse.
//
// Leaves come in two kinds: constants (never receive gradients) and
// parameters bound to an external Tensor, whose gradient buffer receives
// d(loss)/d(parameter) when backward() runs.
template <typename T>
class Tape {
   public:
    // Local gradient rule: receives the gradient w.r.t. the node output and
    // accumulates into the gradient buffers of the inputs that need one.
    using BackwardFn = std::function<void(Tape&, std::span<const T> out_grad)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Tensor<T> value);
    // Records a copy of `param`; after backward() the gradient is added to
    // param.grad(). The tensor must outlive the tape.
    Var parameter(Tensor<T>& param);

    Var record(Tensor<T> value, std::vector<Var> inputs, BackwardFn backward);

    const Tensor<T>& value(Var v) const { return nodes_.at(v.index).value; }
    bool needs_grad(Var v) const { return nodes_.at(v.index).needs_grad; }
    bool any_needs_grad(std::span<const Var> vars) const;

    // Gradient buffer of a node, allocated zeroed on first access.
    std::span<T> grad_buffer(Var v);
    // Gradient of a node after backward(); empty when never reached.
    std::span<const T> grad(Var v) const { return nodes_.at(v.index).grad; }

    std::size_t size() const noexcept { return nodes_.size(); }
    const std::vector<Var>& inputs(Var v) const { return nodes_.at(v.index).inputs; }

    // Runs the recorded rules in reverse order starting from a scalar loss.
    void backward(Var loss);

   private:
    struct Node {
        Tensor<T> value;
        std::vector<T> grad;
        std::vector<Var> inputs;
        BackwardFn backward;
        Tensor<T>* bound = nullptr;
        bool needs_grad = false;
    };
    std::vector<Node> nodes_;
};

// Free-function form: fills the gradient buffers of every parameter bound to
// `tape` with d(loss)/d(parameter).
template <typename T>
void backward(Var loss, Tape<T>& tape) {
    tape.backward(loss);
}

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace kronmark
