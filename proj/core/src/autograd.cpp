#include "kronmark/autograd.hpp"

#include <algorithm>

namespace kronmark {

template <typename T>
Var Tape<T>::constant(Tensor<T> value) {
    Node node;
    node.value = std::move(value);
    nodes_.push_back(std::move(node));
    return Var{nodes_.size() - 1};
}

template <typename T>
Var Tape<T>::parameter(Tensor<T>& param) {
    Node node;
    node.value = param;
    node.value.clear_grad();
    node.bound = &param;
    node.needs_grad = true;
    nodes_.push_back(std::move(node));
    return Var{nodes_.size() - 1};
}

template <typename T>
Var Tape<T>::record(Tensor<T> value, std::vector<Var> inputs, BackwardFn backward) {
    Node node;
    node.value = std::move(value);
    node.needs_grad = any_needs_grad(inputs);
    node.inputs = std::move(inputs);
    if (node.needs_grad) node.backward = std::move(backward);
    nodes_.push_back(std::move(node));
    return Var{nodes_.size() - 1};
}

template <typename T>
bool Tape<T>::any_needs_grad(std::span<const Var> vars) const {
    return std::any_of(vars.begin(), vars.end(), [this](Var v) { return nodes_.at(v.index).needs_grad; });
}

template <typename T>
std::span<T> Tape<T>::grad_buffer(Var v) {
    Node& node = nodes_.at(v.index);
    if (node.grad.size() != node.value.size()) node.grad.assign(node.value.size(), T(0));
    return node.grad;
}

template <typename T>
void Tape<T>::backward(Var loss) {
    const Node& root = nodes_.at(loss.index);
    if (root.value.size() != 1) {
        throw ContractError("backward() needs a scalar loss, got shape " + shape_string(root.value.shape()));
    }
    for (Node& n : nodes_) n.grad.clear();
    grad_buffer(loss)[0] = T(1);

    for (std::size_t i = loss.index + 1; i-- > 0;) {
        Node& node = nodes_[i];
        if (!node.needs_grad || node.grad.empty()) continue;
        if (node.backward) {
            // The rule may allocate input buffers, which never aliases this one.
            std::vector<T> out_grad = std::move(node.grad);
            node.backward(*this, out_grad);
            nodes_[i].grad = std::move(out_grad);
        }
        if (node.bound) {
            auto dst = node.bound->grad();
            for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += node.grad[j];
        }
    }
}

template class Tape<float>;
template class Tape<double>;

}  // namespace kronmark
