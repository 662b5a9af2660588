#pragma once

// Tape-free forward and backward primitives. The tape (autograd.hpp) and the
// inference path both call these, which is what makes a recorded forward pass
// and a plain inference pass bit-identical.

#include <span>

#include "snet/tensor.hpp"

namespace snet::ops {

// Stride-1 cross-correlation with (k-1)/2 zero padding on every side:
// out[n,o,i,j] = bias[o] + sum_{c,u,v} w[o,c,u,v] * x_pad[n,c,i+u,j+v].
template <typename T>
BasicTensor<T> conv2d_same(const BasicTensor<T>& x, const BasicTensor<T>& weight,
                           const BasicTensor<T>& bias);

// Accumulates gradients of conv2d_same given dy. dx may be empty (input needs
// no gradient); dweight and dbias must match weight and bias.
template <typename T>
void conv2d_same_backward(const BasicTensor<T>& x, const BasicTensor<T>& weight,
                          std::span<const T> dy, std::span<T> dx, std::span<T> dweight,
                          std::span<T> dbias);

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x);

// dx += dy * [x > 0]
template <typename T>
void relu_backward(const BasicTensor<T>& x, std::span<const T> dy, std::span<T> dx);

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);

// Mean of (a - b)^2 over all elements, accumulated in double.
template <typename T>
double mse(const BasicTensor<T>& a, const BasicTensor<T>& b);

// da += upstream * 2 (a - b) / numel and db -= the same; either may be empty.
template <typename T>
void mse_backward(const BasicTensor<T>& a, const BasicTensor<T>& b, T upstream, std::span<T> da,
                  std::span<T> db);

// y += x
template <typename T>
void accumulate(std::span<const T> x, std::span<T> y);

}  // namespace snet::ops
