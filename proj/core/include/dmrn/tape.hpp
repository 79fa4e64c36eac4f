#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

#include "dmrn/tensor.hpp"

namespace dmrn {

template <typename T>
class Tape;

/// Handle to a value recorded on a tape.
template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  std::size_t id = 0;

  const Tensor<T>& value() const { return tape->value(id); }
  const Shape& shape() const { return value().shape(); }
};

/// Reverse-mode record of one forward pass.
///
/// Nodes are appended in execution order, so the node list is already a
/// topological order, and values stay at a fixed address while the tape
/// grows. Parameters are bound by reference: backward()
/// accumulates into the bound tensor's grad buffer. A tape is used by one
/// thread at a time; separate tapes may run concurrently as long as they
/// do not bind the same parameters.
template <typename T>
class Tape {
 public:
  /// Propagates the node's output gradient to its inputs.
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that never receives a gradient.
  Var<T> constant(Tensor<T> value);

  /// Leaf bound to an external tensor. Binding the same tensor twice
  /// returns the same node, so shared weights accumulate one gradient.
  Var<T> parameter(Tensor<T>& param);

  /// Appends an operation result. `backward` may be empty when none of
  /// the inputs needs a gradient.
  Var<T> record(Tensor<T> value, std::vector<std::size_t> inputs,
                BackwardFn backward);

  const Tensor<T>& value(std::size_t id) const;
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  bool any_requires_grad(std::initializer_list<std::size_t> ids) const;

  /// Gradient buffer of a node, zero-allocated on first access.
  std::span<T> grad(std::size_t id);

  /// Seeds d(loss)/d(loss) = 1 and runs every recorded backward function
  /// once, in reverse order. Every bound parameter ends up with an
  /// allocated grad buffer; unreachable ones receive zero.
  void backward(Var<T> loss);

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> owned;
    Tensor<T>* bound = nullptr;
    std::vector<T> grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
  };

  std::deque<Node> nodes_;
  std::unordered_map<const Tensor<T>*, std::size_t> bound_ids_;
  bool backward_done_ = false;
};

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace dmrn
