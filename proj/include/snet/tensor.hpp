#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "snet/errors.hpp"

namespace snet {

// (batch, channel, height, width); width is the fastest-varying index.
struct Shape {
  std::size_t n = 0;
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;

  std::size_t numel() const { return n * c * h * w; }
  std::size_t plane() const { return h * w; }
  bool operator==(const Shape&) const = default;
  std::string to_string() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
           std::to_string(w) + ")";
  }
};

// Rank-4 dense array with an optional gradient buffer of the same shape.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;
  explicit BasicTensor(Shape shape, T fill = T{0}) : shape_(shape), data_(shape.numel(), fill) {}
  BasicTensor(Shape shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape_.numel()) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_.to_string());
    }
  }

  const Shape& shape() const { return shape_; }
  std::size_t numel() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  T* raw() { return data_.data(); }
  const T* raw() const { return data_.data(); }

  // Pointer to the (n, c) spatial plane.
  T* plane(std::size_t n, std::size_t c) { return data_.data() + (n * shape_.c + c) * shape_.plane(); }
  const T* plane(std::size_t n, std::size_t c) const {
    return data_.data() + (n * shape_.c + c) * shape_.plane();
  }

  T& at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) {
    return data_[((n * shape_.c + c) * shape_.h + y) * shape_.w + x];
  }
  const T& at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const {
    return data_[((n * shape_.c + c) * shape_.h + y) * shape_.w + x];
  }

  bool has_grad() const { return has_grad_; }
  std::span<T> grad() { return grad_; }
  std::span<const T> grad() const { return grad_; }
  // Allocates a zero gradient if absent; leaves an existing one untouched.
  std::span<T> ensure_grad() {
    if (!has_grad_) {
      grad_.assign(data_.size(), T{0});
      has_grad_ = true;
    }
    return grad_;
  }
  void zero_grad() {
    if (has_grad_) std::fill(grad_.begin(), grad_.end(), T{0});
  }
  void clear_grad() {
    grad_.clear();
    grad_.shrink_to_fit();
    has_grad_ = false;
  }

  bool all_finite() const {
    for (T v : data_) {
      if (!std::isfinite(v)) return false;
    }
    for (T v : grad_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  template <typename U>
  BasicTensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return BasicTensor<U>(shape_, std::move(out));
  }

 private:
  Shape shape_{};
  std::vector<T> data_;
  std::vector<T> grad_;
  bool has_grad_ = false;
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

// Weights (out, in, k, k) and bias (out, 1, 1, 1) of a same-padded convolution.
template <typename T>
struct BasicConvParams {
  BasicTensor<T> weight;
  BasicTensor<T> bias;

  BasicConvParams() = default;
  BasicConvParams(std::size_t in_channels, std::size_t out_channels, std::size_t kernel)
      : weight(Shape{out_channels, in_channels, kernel, kernel}),
        bias(Shape{out_channels, 1, 1, 1}) {
    validate();
  }
  BasicConvParams(BasicTensor<T> w, BasicTensor<T> b) : weight(std::move(w)), bias(std::move(b)) {
    validate();
  }

  std::size_t in_channels() const { return weight.shape().c; }
  std::size_t out_channels() const { return weight.shape().n; }
  std::size_t kernel() const { return weight.shape().h; }
  std::size_t parameter_count() const { return weight.numel() + bias.numel(); }

  void validate() const {
    const Shape& ws = weight.shape();
    if (ws.h != ws.w) throw ShapeError("convolution kernel must be square, got " + ws.to_string());
    if (ws.h % 2 == 0) throw ShapeError("convolution kernel size must be odd, got " + std::to_string(ws.h));
    if (ws.n == 0 || ws.c == 0) throw ShapeError("convolution needs at least one channel");
    if (bias.shape() != Shape{ws.n, 1, 1, 1}) {
      throw ShapeError("bias shape " + bias.shape().to_string() + " does not match " +
                       std::to_string(ws.n) + " output channels");
    }
  }

  template <typename U>
  BasicConvParams<U> cast() const {
    return BasicConvParams<U>(weight.template cast<U>(), bias.template cast<U>());
  }
};

using ConvParams = BasicConvParams<float>;

}  // namespace snet
