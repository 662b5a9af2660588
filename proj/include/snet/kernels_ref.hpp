#pragma once

// Scalar reference kernels. Templated so the double-precision engine used by
// gradient checks shares the exact code of the float reference path.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "snet/kernels.hpp"

namespace snet::kernels::ref {

template <typename T>
void gemm(Transpose ta, Transpose tb, std::size_t m, std::size_t n, std::size_t k, const T* a,
          std::size_t lda, const T* b, std::size_t ldb, T beta, T* c, std::size_t ldc) {
  std::vector<T> row(n);
  for (std::size_t i = 0; i < m; ++i) {
    std::fill(row.begin(), row.end(), T{0});
    for (std::size_t p = 0; p < k; ++p) {
      const T aip = ta == Transpose::kYes ? a[p * lda + i] : a[i * lda + p];
      if (tb == Transpose::kYes) {
        for (std::size_t j = 0; j < n; ++j) row[j] += aip * b[j * ldb + p];
      } else {
        const T* brow = b + p * ldb;
        for (std::size_t j = 0; j < n; ++j) row[j] += aip * brow[j];
      }
    }
    T* crow = c + i * ldc;
    if (beta == T{0}) {
      std::copy(row.begin(), row.end(), crow);
    } else {
      for (std::size_t j = 0; j < n; ++j) crow[j] = beta * crow[j] + row[j];
    }
  }
}

template <typename T>
void relu(const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > T{0} ? x[i] : T{0};
}

template <typename T>
void relu_backward(const T* x, const T* dy, T* dx, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    if (x[i] > T{0}) dx[i] += dy[i];
  }
}

template <typename T>
void add(const T* a, const T* b, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = a[i] + b[i];
}

template <typename T>
void accumulate(const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += x[i];
}

template <typename T>
double squared_error(const T* a, const T* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += d * d;
  }
  return acc;
}

template <typename T>
void scaled_difference(const T* a, const T* b, T scale, T* dx, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dx[i] += scale * (a[i] - b[i]);
}

template <typename T>
double sum(const T* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += static_cast<double>(x[i]);
  return acc;
}

template <typename T>
void adam_update(T* theta, const T* grad, T* m, T* v, std::size_t n, const AdamCoeffs& c) {
  const T b1 = c.beta1, b2 = c.beta2;
  const T one = T{1};
  for (std::size_t i = 0; i < n; ++i) {
    const T g = grad[i];
    m[i] = b1 * m[i] + (one - b1) * g;
    v[i] = b2 * v[i] + (one - b2) * g * g;
    const T m_hat = m[i] / static_cast<T>(c.bias_correction1);
    const T v_hat = v[i] / static_cast<T>(c.bias_correction2);
    theta[i] -= static_cast<T>(c.lr) * m_hat / (std::sqrt(v_hat) + static_cast<T>(c.eps));
  }
}

template <typename T>
void conv_direct(const T* xp, std::size_t channels, std::size_t ldx, const T* w, std::size_t out,
                 std::size_t k, std::size_t h, std::size_t width, T* y) {
  const std::size_t plane = (h + k - 1) * ldx;
  for (std::size_t o = 0; o < out; ++o) {
    T* yo = y + o * h * width;
    for (std::size_t c = 0; c < channels; ++c) {
      const T* xc = xp + c * plane;
      const T* wc = w + (o * channels + c) * k * k;
      for (std::size_t u = 0; u < k; ++u) {
        for (std::size_t v = 0; v < k; ++v) {
          const T wv = wc[u * k + v];
          for (std::size_t i = 0; i < h; ++i) {
            const T* src = xc + (i + u) * ldx + v;
            T* dst = yo + i * width;
            for (std::size_t j = 0; j < width; ++j) dst[j] += wv * src[j];
          }
        }
      }
    }
  }
}

template <typename T>
void conv_weight_grad(const T* xp, std::size_t channels, std::size_t ldx, const T* g, std::size_t ldg,
                      std::size_t out, std::size_t k, std::size_t h, std::size_t width, T* dw) {
  const std::size_t plane = (h + k - 1) * ldx;
  for (std::size_t o = 0; o < out; ++o) {
    const T* go = g + o * h * ldg;
    for (std::size_t c = 0; c < channels; ++c) {
      const T* xc = xp + c * plane;
      T* dwc = dw + (o * channels + c) * k * k;
      for (std::size_t u = 0; u < k; ++u) {
        for (std::size_t v = 0; v < k; ++v) {
          T acc{0};
          for (std::size_t i = 0; i < h; ++i) {
            const T* src = xc + (i + u) * ldx + v;
            const T* gr = go + i * ldg;
            for (std::size_t j = 0; j < width; ++j) acc += gr[j] * src[j];
          }
          dwc[u * k + v] += acc;
        }
      }
    }
  }
}

}  // namespace snet::kernels::ref
