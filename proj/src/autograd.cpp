#include "snet/autograd.hpp"

#include <stdexcept>
#include <string>

#include "snet/ops.hpp"

namespace snet {

template <typename T>
VarId BasicTape<T>::push(Node node) {
  nodes_.push_back(std::move(node));
  return VarId{nodes_.size() - 1};
}

template <typename T>
const typename BasicTape<T>::Node& BasicTape<T>::node(VarId id) const {
  if (id.index >= nodes_.size()) throw std::out_of_range("tape node id out of range");
  return nodes_[id.index];
}

template <typename T>
VarId BasicTape<T>::constant(BasicTensor<T> value) {
  return push(Node{Op::kConstant, {}, std::move(value), nullptr});
}

template <typename T>
VarId BasicTape<T>::parameter(BasicTensor<T>& param) {
  if (auto it = param_ids_.find(&param); it != param_ids_.end()) return it->second;
  const VarId id = push(Node{Op::kParameter, {}, BasicTensor<T>{}, &param});
  param_ids_.emplace(&param, id);
  return id;
}

template <typename T>
const BasicTensor<T>& BasicTape<T>::value(VarId id) const {
  const Node& n = node(id);
  return n.op == Op::kParameter ? *n.param : n.value;
}

template <typename T>
T BasicTape<T>::scalar(VarId id) const {
  const BasicTensor<T>& v = value(id);
  if (v.numel() != 1) throw ShapeError("node is not a scalar: " + v.shape().to_string());
  return v.raw()[0];
}

template <typename T>
VarId BasicTape<T>::conv2d_same(VarId x, VarId weight, VarId bias) {
  BasicTensor<T> out = ops::conv2d_same(value(x), value(weight), value(bias));
  return push(Node{Op::kConv2d, {x, weight, bias}, std::move(out), nullptr});
}

template <typename T>
VarId BasicTape<T>::relu(VarId x) {
  return push(Node{Op::kRelu, {x}, ops::relu(value(x)), nullptr});
}

template <typename T>
VarId BasicTape<T>::add(VarId a, VarId b) {
  return push(Node{Op::kAdd, {a, b}, ops::add(value(a), value(b)), nullptr});
}

template <typename T>
VarId BasicTape<T>::mse(VarId a, VarId b) {
  const double loss = ops::mse(value(a), value(b));
  return push(Node{Op::kMse, {a, b}, BasicTensor<T>(Shape{1, 1, 1, 1}, static_cast<T>(loss)), nullptr});
}

template <typename T>
VarId BasicTape<T>::mean(std::span<const VarId> scalars) {
  if (scalars.empty()) throw ShapeError("mean of zero scalars");
  double total = 0.0;
  for (VarId id : scalars) total += static_cast<double>(scalar(id));
  const double m = total / static_cast<double>(scalars.size());
  return push(Node{Op::kMean, std::vector<VarId>(scalars.begin(), scalars.end()),
                   BasicTensor<T>(Shape{1, 1, 1, 1}, static_cast<T>(m)), nullptr});
}

template <typename T>
std::vector<T>& BasicTape<T>::grad_buffer(VarId id) {
  std::vector<T>& g = grads_[id.index];
  if (g.empty()) g.assign(value(id).numel(), T{0});
  return g;
}

template <typename T>
std::span<const T> BasicTape<T>::grad(VarId id) const {
  if (id.index >= grads_.size()) return {};
  return grads_[id.index];
}

template <typename T>
void BasicTape<T>::backward(VarId loss) {
  if (value(loss).numel() != 1) {
    throw ShapeError("backward requires a scalar loss, got " + value(loss).shape().to_string());
  }
  grads_.assign(nodes_.size(), {});
  grad_buffer(loss)[0] = T{1};

  for (std::size_t i = loss.index + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (grads_[i].empty()) {
      if (n.op == Op::kParameter) n.param->ensure_grad();
      continue;
    }
    const std::span<const T> g = grads_[i];
    switch (n.op) {
      case Op::kConstant:
        break;
      case Op::kParameter:
        ops::accumulate(g, n.param->ensure_grad());
        break;
      case Op::kConv2d: {
        const VarId x = n.inputs[0];
        const bool x_needs_grad = node(x).op != Op::kConstant;
        ops::conv2d_same_backward<T>(value(x), value(n.inputs[1]), g,
                                     x_needs_grad ? std::span<T>(grad_buffer(x)) : std::span<T>(),
                                     grad_buffer(n.inputs[1]), grad_buffer(n.inputs[2]));
        break;
      }
      case Op::kRelu:
        ops::relu_backward<T>(value(n.inputs[0]), g, grad_buffer(n.inputs[0]));
        break;
      case Op::kAdd:
        ops::accumulate<T>(g, grad_buffer(n.inputs[0]));
        ops::accumulate<T>(g, grad_buffer(n.inputs[1]));
        break;
      case Op::kMse: {
        const VarId a = n.inputs[0], b = n.inputs[1];
        std::span<T> da = node(a).op != Op::kConstant ? std::span<T>(grad_buffer(a)) : std::span<T>();
        std::span<T> db = node(b).op != Op::kConstant ? std::span<T>(grad_buffer(b)) : std::span<T>();
        ops::mse_backward<T>(value(a), value(b), g[0], da, db);
        break;
      }
      case Op::kMean: {
        const T share = g[0] / static_cast<T>(n.inputs.size());
        for (VarId in : n.inputs) grad_buffer(in)[0] += share;
        break;
      }
    }
  }
}

template <typename T>
std::vector<double> fd_gradient(const std::function<double()>& f, std::span<T> theta, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("finite-difference step must be positive");
  std::vector<double> out(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const T saved = theta[i];
    const T hi = static_cast<T>(static_cast<double>(saved) + eps);
    const T lo = static_cast<T>(static_cast<double>(saved) - eps);
    theta[i] = hi;
    const double plus = f();
    theta[i] = lo;
    const double minus = f();
    theta[i] = saved;
    // Divide by the step actually taken after rounding to T.
    out[i] = (plus - minus) / (static_cast<double>(hi) - static_cast<double>(lo));
  }
  return out;
}

template class BasicTape<float>;
template class BasicTape<double>;
template std::vector<double> fd_gradient<float>(const std::function<double()>&, std::span<float>,
                                                double);
template std::vector<double> fd_gradient<double>(const std::function<double()>&, std::span<double>,
                                                 double);

}  // namespace snet
