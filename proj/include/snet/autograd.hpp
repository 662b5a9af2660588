#pragma once

// Reverse-mode differentiation over a per-forward-pass tape.
//
// Nodes are appended in execution order, so the node list is already a
// topological order of the DAG and backward walks it once in reverse.
// Parameters are registered by reference: their gradients accumulate into the
// parameter tensor's own grad buffer, and registering the same tensor twice
// yields the same node (weight sharing).

#include <cstddef>
#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

#include "snet/tensor.hpp"

namespace snet {

struct VarId {
  std::size_t index = 0;
  bool operator==(const VarId&) const = default;
};

template <typename T>
class BasicTape {
 public:
  BasicTape() = default;
  BasicTape(const BasicTape&) = delete;
  BasicTape& operator=(const BasicTape&) = delete;

  // A value that receives no gradient (inputs, targets).
  VarId constant(BasicTensor<T> value);
  // A trainable tensor; must outlive the tape.
  VarId parameter(BasicTensor<T>& param);

  VarId conv2d_same(VarId x, VarId weight, VarId bias);
  VarId conv2d_same(VarId x, BasicConvParams<T>& params) {
    return conv2d_same(x, parameter(params.weight), parameter(params.bias));
  }
  VarId relu(VarId x);
  VarId add(VarId a, VarId b);
  // Scalar (1,1,1,1) mean squared error.
  VarId mse(VarId a, VarId b);
  // Scalar arithmetic mean of scalar nodes.
  VarId mean(std::span<const VarId> scalars);

  const BasicTensor<T>& value(VarId id) const;
  T scalar(VarId id) const;

  // Gradient of the last backward pass w.r.t. a node (empty if none flowed).
  std::span<const T> grad(VarId id) const;

  // Propagates d(loss)/d(node) to every node; parameter gradients are added
  // to the parameter tensors. Every registered parameter ends up with a grad
  // buffer, so unreachable parameters read as zero.
  void backward(VarId loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  enum class Op { kConstant, kParameter, kConv2d, kRelu, kAdd, kMse, kMean };

  struct Node {
    Op op;
    std::vector<VarId> inputs;
    BasicTensor<T> value;  // unused for parameters
    BasicTensor<T>* param = nullptr;
  };

  VarId push(Node node);
  const Node& node(VarId id) const;
  std::vector<T>& grad_buffer(VarId id);

  std::vector<Node> nodes_;
  std::vector<std::vector<T>> grads_;
  std::unordered_map<const BasicTensor<T>*, VarId> param_ids_;
};

using Tape = BasicTape<float>;
using TapeD = BasicTape<double>;

// Central differences (f(theta + eps e_i) - f(theta - eps e_i)) / (2 eps) for
// every coordinate of theta. theta is restored before returning.
template <typename T>
std::vector<double> fd_gradient(const std::function<double()>& f, std::span<T> theta, double eps);

}  // namespace snet
