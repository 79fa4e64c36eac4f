#include "dmrn/tape.hpp"

#include <algorithm>

namespace dmrn {

template <typename T>
Var<T> Tape<T>::constant(Tensor<T> value) {
  Node node;
  node.owned = std::move(value);
  nodes_.push_back(std::move(node));
  return {this, nodes_.size() - 1};
}

template <typename T>
Var<T> Tape<T>::parameter(Tensor<T>& param) {
  if (auto it = bound_ids_.find(&param); it != bound_ids_.end()) {
    return {this, it->second};
  }
  Node node;
  node.bound = &param;
  node.requires_grad = true;
  nodes_.push_back(std::move(node));
  bound_ids_.emplace(&param, nodes_.size() - 1);
  return {this, nodes_.size() - 1};
}

template <typename T>
Var<T> Tape<T>::record(Tensor<T> value, std::vector<std::size_t> inputs,
                       BackwardFn backward) {
  Node node;
  node.owned = std::move(value);
  node.requires_grad =
      backward && std::any_of(inputs.begin(), inputs.end(), [&](std::size_t i) {
        return nodes_.at(i).requires_grad;
      });
  node.inputs = std::move(inputs);
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return {this, nodes_.size() - 1};
}

template <typename T>
const Tensor<T>& Tape<T>::value(std::size_t id) const {
  const Node& node = nodes_.at(id);
  return node.bound ? *node.bound : node.owned;
}

template <typename T>
bool Tape<T>::any_requires_grad(std::initializer_list<std::size_t> ids) const {
  return std::any_of(ids.begin(), ids.end(),
                     [&](std::size_t i) { return nodes_[i].requires_grad; });
}

template <typename T>
std::span<T> Tape<T>::grad(std::size_t id) {
  Node& node = nodes_.at(id);
  const std::size_t n = value(id).numel();
  if (node.grad.size() != n) node.grad.assign(n, T{0});
  return node.grad;
}

template <typename T>
void Tape<T>::backward(Var<T> loss) {
  if (loss.tape != this) throw ContractError("backward: loss belongs to another tape");
  if (backward_done_) throw ContractError("backward: tape already consumed");
  if (value(loss.id).numel() != 1) {
    throw ContractError("backward: loss must be a scalar, got shape " +
                        shape_to_string(value(loss.id).shape()));
  }
  backward_done_ = true;

  grad(loss.id)[0] = T{1};
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (node.backward && !node.grad.empty()) node.backward(*this, i);
  }

  for (Node& node : nodes_) {
    if (!node.bound) continue;
    node.bound->ensure_grad();
    if (node.grad.empty()) continue;
    auto dst = node.bound->grad();
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += node.grad[k];
  }
}

template class Tape<float>;
template class Tape<double>;

}  // namespace dmrn
