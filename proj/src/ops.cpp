#include "snet/ops.hpp"

#include <algorithm>
#include <string>
#include <vector>

#include "snet/kernels.hpp"
#include "snet/kernels_ref.hpp"

namespace snet::ops {
namespace {

using kernels::Transpose;

// float runs on the active (possibly SIMD) table; double always uses the
// reference templates.
template <typename T>
struct Backend;

template <>
struct Backend<float> {
  static void gemm(Transpose ta, Transpose tb, std::size_t m, std::size_t n, std::size_t k,
                   const float* a, std::size_t lda, const float* b, std::size_t ldb, float beta,
                   float* c, std::size_t ldc) {
    kernels::active().gemm(ta, tb, m, n, k, a, lda, b, ldb, beta, c, ldc);
  }
  static void relu(const float* x, float* y, std::size_t n) { kernels::active().relu(x, y, n); }
  static void relu_backward(const float* x, const float* dy, float* dx, std::size_t n) {
    kernels::active().relu_backward(x, dy, dx, n);
  }
  static void add(const float* a, const float* b, float* y, std::size_t n) {
    kernels::active().add(a, b, y, n);
  }
  static void accumulate(const float* x, float* y, std::size_t n) {
    kernels::active().accumulate(x, y, n);
  }
  static double squared_error(const float* a, const float* b, std::size_t n) {
    return kernels::active().squared_error(a, b, n);
  }
  static void scaled_difference(const float* a, const float* b, float s, float* dx,
                                std::size_t n) {
    kernels::active().scaled_difference(a, b, s, dx, n);
  }
  static double sum(const float* x, std::size_t n) { return kernels::active().sum(x, n); }
  static void conv_direct(const float* xp, std::size_t ch, std::size_t ldx, const float* w,
                          std::size_t out, std::size_t k, std::size_t h, std::size_t wd, float* y) {
    kernels::active().conv_direct(xp, ch, ldx, w, out, k, h, wd, y);
  }
  static void conv_weight_grad(const float* xp, std::size_t ch, std::size_t ldx, const float* g,
                               std::size_t ldg, std::size_t out, std::size_t k, std::size_t h,
                               std::size_t wd, float* dw) {
    kernels::active().conv_weight_grad(xp, ch, ldx, g, ldg, out, k, h, wd, dw);
  }
};

template <>
struct Backend<double> {
  static void gemm(Transpose ta, Transpose tb, std::size_t m, std::size_t n, std::size_t k,
                   const double* a, std::size_t lda, const double* b, std::size_t ldb,
                   double beta, double* c, std::size_t ldc) {
    kernels::ref::gemm<double>(ta, tb, m, n, k, a, lda, b, ldb, beta, c, ldc);
  }
  static void relu(const double* x, double* y, std::size_t n) { kernels::ref::relu(x, y, n); }
  static void relu_backward(const double* x, const double* dy, double* dx, std::size_t n) {
    kernels::ref::relu_backward(x, dy, dx, n);
  }
  static void add(const double* a, const double* b, double* y, std::size_t n) {
    kernels::ref::add(a, b, y, n);
  }
  static void accumulate(const double* x, double* y, std::size_t n) {
    kernels::ref::accumulate(x, y, n);
  }
  static double squared_error(const double* a, const double* b, std::size_t n) {
    return kernels::ref::squared_error(a, b, n);
  }
  static void scaled_difference(const double* a, const double* b, double s, double* dx,
                                std::size_t n) {
    kernels::ref::scaled_difference(a, b, s, dx, n);
  }
  static double sum(const double* x, std::size_t n) { return kernels::ref::sum(x, n); }
  static void conv_direct(const double* xp, std::size_t ch, std::size_t ldx, const double* w,
                          std::size_t out, std::size_t k, std::size_t h, std::size_t wd, double* y) {
    kernels::ref::conv_direct(xp, ch, ldx, w, out, k, h, wd, y);
  }
  static void conv_weight_grad(const double* xp, std::size_t ch, std::size_t ldx, const double* g,
                               std::size_t ldg, std::size_t out, std::size_t k, std::size_t h,
                               std::size_t wd, double* dw) {
    kernels::ref::conv_weight_grad(xp, ch, ldx, g, ldg, out, k, h, wd, dw);
  }
};

template <typename T>
std::vector<T>& scratch(int slot) {
  thread_local std::vector<T> buffers[4];
  return buffers[slot];
}

// col[(c*k + u)*k + v][i*w + j] = x_pad[c][i + u - pad][j + v - pad] for one sample.
template <typename T>
void im2col(const T* x, std::size_t channels, std::size_t h, std::size_t w, std::size_t k, T* col) {
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k / 2);
  const std::ptrdiff_t sh = static_cast<std::ptrdiff_t>(h), sw = static_cast<std::ptrdiff_t>(w);
  for (std::size_t c = 0; c < channels; ++c) {
    const T* src = x + c * h * w;
    for (std::size_t u = 0; u < k; ++u) {
      for (std::size_t v = 0; v < k; ++v) {
        const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(v) - pad;
        const std::ptrdiff_t j_lo = std::clamp<std::ptrdiff_t>(-dx, 0, sw);
        const std::ptrdiff_t j_hi = std::max(j_lo, std::clamp<std::ptrdiff_t>(sw - dx, 0, sw));
        for (std::ptrdiff_t i = 0; i < sh; ++i) {
          const std::ptrdiff_t y = i + static_cast<std::ptrdiff_t>(u) - pad;
          T* dst = col + i * sw;
          if (y < 0 || y >= sh) {
            std::fill(dst, dst + sw, T{0});
            continue;
          }
          const T* row = src + y * sw;
          std::fill(dst, dst + j_lo, T{0});
          std::copy(row + j_lo + dx, row + j_hi + dx, dst + j_lo);
          std::fill(dst + j_hi, dst + sw, T{0});
        }
        col += h * w;
      }
    }
  }
}

// Layers with at most this many output (or, for weight gradients, input)
// channels skip im2col and use the direct kernels.
constexpr std::size_t kDirectMaxChannels = 4;

// Zero-bordered copy of one sample in the layout the direct kernels expect.
template <typename T>
void pad_sample(const T* x, std::size_t channels, std::size_t h, std::size_t w, std::size_t k,
                std::vector<T>& xp) {
  const std::size_t ldx = kernels::padded_stride(w, k), pad = k / 2;
  const std::size_t rows = h + k - 1;
  xp.assign(channels * rows * ldx, T{0});
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t i = 0; i < h; ++i) {
      const T* src = x + (c * h + i) * w;
      std::copy(src, src + w, xp.data() + (c * rows + i + pad) * ldx + pad);
    }
  }
}

// Rows of `planes` planes copied to a stride of round_up(w, 8), zero-filled.
template <typename T>
void pad_rows(const T* g, std::size_t planes, std::size_t h, std::size_t w, std::vector<T>& out) {
  const std::size_t ld = (w + 7) / 8 * 8;
  out.assign(planes * h * ld, T{0});
  for (std::size_t r = 0; r < planes * h; ++r) std::copy(g + r * w, g + (r + 1) * w, out.data() + r * ld);
}

// wt[c][o][k-1-u][k-1-v] = w[o][c][u][v]: the kernel whose same-padded
// correlation with dy gives dx.
template <typename T>
void flip_transpose(const BasicTensor<T>& w, std::vector<T>& wt) {
  const Shape& ws = w.shape();
  const std::size_t kk = ws.h * ws.w;
  wt.resize(w.numel());
  for (std::size_t o = 0; o < ws.n; ++o) {
    for (std::size_t c = 0; c < ws.c; ++c) {
      const T* src = w.raw() + (o * ws.c + c) * kk;
      T* dst = wt.data() + (c * ws.n + o) * kk;
      for (std::size_t i = 0; i < kk; ++i) dst[kk - 1 - i] = src[i];
    }
  }
}

template <typename T>
void check_conv_shapes(const BasicTensor<T>& x, const BasicTensor<T>& weight,
                       const BasicTensor<T>& bias) {
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  if (xs.n == 0 || xs.h == 0 || xs.w == 0) {
    throw ShapeError("conv2d input has zero-sized dimension " + xs.to_string());
  }
  if (ws.h != ws.w || ws.h % 2 == 0) {
    throw ShapeError("conv2d kernel must be square with odd size, got " + ws.to_string());
  }
  if (xs.c != ws.c) {
    throw ShapeError("conv2d channel mismatch: input has " + std::to_string(xs.c) +
                     " channels, kernel expects " + std::to_string(ws.c));
  }
  if (bias.numel() != ws.n) {
    throw ShapeError("conv2d bias has " + std::to_string(bias.numel()) + " entries for " +
                     std::to_string(ws.n) + " output channels");
  }
}

template <typename T>
void check_same_shape(const BasicTensor<T>& a, const BasicTensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + " shape mismatch: " + a.shape().to_string() + " vs " +
                     b.shape().to_string());
  }
}

}  // namespace

template <typename T>
BasicTensor<T> conv2d_same(const BasicTensor<T>& x, const BasicTensor<T>& weight,
                           const BasicTensor<T>& bias) {
  check_conv_shapes(x, weight, bias);
  const Shape& xs = x.shape();
  const std::size_t out_ch = weight.shape().n;
  const std::size_t k = weight.shape().h;
  const std::size_t hw = xs.plane();
  const std::size_t depth = xs.c * k * k;

  BasicTensor<T> out(Shape{xs.n, out_ch, xs.h, xs.w});
  if (k > 1 && out_ch <= kDirectMaxChannels) {
    std::vector<T>& xp = scratch<T>(0);
    for (std::size_t n = 0; n < xs.n; ++n) {
      T* y = out.plane(n, 0);
      for (std::size_t o = 0; o < out_ch; ++o) std::fill(y + o * hw, y + (o + 1) * hw, bias.raw()[o]);
      pad_sample(x.plane(n, 0), xs.c, xs.h, xs.w, k, xp);
      Backend<T>::conv_direct(xp.data(), xs.c, kernels::padded_stride(xs.w, k), weight.raw(), out_ch, k,
                              xs.h, xs.w, y);
    }
    return out;
  }
  std::vector<T>& col = scratch<T>(0);
  if (k > 1) col.resize(depth * hw);
  for (std::size_t n = 0; n < xs.n; ++n) {
    const T* cols = x.plane(n, 0);
    if (k > 1) {
      im2col(x.plane(n, 0), xs.c, xs.h, xs.w, k, col.data());
      cols = col.data();
    }
    T* y = out.plane(n, 0);
    for (std::size_t o = 0; o < out_ch; ++o) {
      std::fill(y + o * hw, y + (o + 1) * hw, bias.raw()[o]);
    }
    Backend<T>::gemm(Transpose::kNo, Transpose::kNo, out_ch, hw, depth, weight.raw(), depth, cols,
                     hw, T{1}, y, hw);
  }
  return out;
}

template <typename T>
void conv2d_same_backward(const BasicTensor<T>& x, const BasicTensor<T>& weight,
                          std::span<const T> dy, std::span<T> dx, std::span<T> dweight,
                          std::span<T> dbias) {
  const Shape& xs = x.shape();
  const std::size_t out_ch = weight.shape().n;
  const std::size_t k = weight.shape().h;
  const std::size_t hw = xs.plane();
  const std::size_t depth = xs.c * k * k;
  if (dy.size() != xs.n * out_ch * hw) throw ShapeError("conv2d backward: upstream gradient size");
  if (!dx.empty() && dx.size() != x.numel()) throw ShapeError("conv2d backward: input gradient size");
  if (dweight.size() != weight.numel() || dbias.size() != out_ch) {
    throw ShapeError("conv2d backward: parameter gradient size");
  }

  std::vector<T>& col = scratch<T>(0);
  std::vector<T>& gcol = scratch<T>(1);
  std::vector<T>& wt = scratch<T>(2);
  std::vector<T>& gpad = scratch<T>(3);
  const std::size_t gdepth = out_ch * k * k;
  const bool direct = k > 1 && std::min(out_ch, xs.c) <= kDirectMaxChannels;
  if (k > 1 && !direct) col.resize(depth * hw);
  if (!dx.empty() && k > 1) {
    if (xs.c > kDirectMaxChannels) gcol.resize(gdepth * hw);
    flip_transpose(weight, wt);
  }
  for (std::size_t n = 0; n < xs.n; ++n) {
    const T* g = dy.data() + n * out_ch * hw;
    if (direct) {
      pad_sample(x.plane(n, 0), xs.c, xs.h, xs.w, k, col);
      pad_rows(g, out_ch, xs.h, xs.w, gpad);
      Backend<T>::conv_weight_grad(col.data(), xs.c, kernels::padded_stride(xs.w, k), gpad.data(),
                                   (xs.w + 7) / 8 * 8, out_ch, k, xs.h, xs.w, dweight.data());
    } else {
      const T* cols = x.plane(n, 0);
      if (k > 1) {
        im2col(x.plane(n, 0), xs.c, xs.h, xs.w, k, col.data());
        cols = col.data();
      }
      Backend<T>::gemm(Transpose::kNo, Transpose::kYes, out_ch, depth, hw, g, hw, cols, hw, T{1},
                       dweight.data(), depth);
    }
    for (std::size_t o = 0; o < out_ch; ++o) {
      dbias[o] += static_cast<T>(Backend<T>::sum(g + o * hw, hw));
    }
    if (dx.empty()) continue;
    T* dxn = dx.data() + n * xs.c * hw;
    if (k == 1) {
      Backend<T>::gemm(Transpose::kYes, Transpose::kNo, depth, hw, out_ch, weight.raw(), depth, g,
                       hw, T{1}, dxn, hw);
    } else if (xs.c <= kDirectMaxChannels) {
      pad_sample(g, out_ch, xs.h, xs.w, k, gcol);
      Backend<T>::conv_direct(gcol.data(), out_ch, kernels::padded_stride(xs.w, k), wt.data(), xs.c, k, xs.h,
                              xs.w, dxn);
    } else {
      im2col(g, out_ch, xs.h, xs.w, k, gcol.data());
      Backend<T>::gemm(Transpose::kNo, Transpose::kNo, xs.c, hw, gdepth, wt.data(), gdepth,
                       gcol.data(), hw, T{1}, dxn, hw);
    }
  }
}

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x) {
  BasicTensor<T> out(x.shape());
  Backend<T>::relu(x.raw(), out.raw(), x.numel());
  return out;
}

template <typename T>
void relu_backward(const BasicTensor<T>& x, std::span<const T> dy, std::span<T> dx) {
  if (dy.size() != x.numel() || dx.size() != x.numel()) throw ShapeError("relu backward size");
  Backend<T>::relu_backward(x.raw(), dy.data(), dx.data(), x.numel());
}

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  check_same_shape(a, b, "add");
  BasicTensor<T> out(a.shape());
  Backend<T>::add(a.raw(), b.raw(), out.raw(), a.numel());
  return out;
}

template <typename T>
double mse(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  check_same_shape(a, b, "mse");
  if (a.numel() == 0) throw ShapeError("mse of empty tensors");
  return Backend<T>::squared_error(a.raw(), b.raw(), a.numel()) / static_cast<double>(a.numel());
}

template <typename T>
void mse_backward(const BasicTensor<T>& a, const BasicTensor<T>& b, T upstream, std::span<T> da,
                  std::span<T> db) {
  check_same_shape(a, b, "mse");
  const T scale = upstream * T{2} / static_cast<T>(a.numel());
  if (!da.empty()) Backend<T>::scaled_difference(a.raw(), b.raw(), scale, da.data(), a.numel());
  if (!db.empty()) Backend<T>::scaled_difference(b.raw(), a.raw(), scale, db.data(), a.numel());
}

template <typename T>
void accumulate(std::span<const T> x, std::span<T> y) {
  if (x.size() != y.size()) throw ShapeError("accumulate size mismatch");
  Backend<T>::accumulate(x.data(), y.data(), x.size());
}

#define SNET_INSTANTIATE_OPS(T)                                                                 \
  template BasicTensor<T> conv2d_same(const BasicTensor<T>&, const BasicTensor<T>&,             \
                                      const BasicTensor<T>&);                                   \
  template void conv2d_same_backward(const BasicTensor<T>&, const BasicTensor<T>&,              \
                                     std::span<const T>, std::span<T>, std::span<T>,            \
                                     std::span<T>);                                             \
  template BasicTensor<T> relu(const BasicTensor<T>&);                                          \
  template void relu_backward(const BasicTensor<T>&, std::span<const T>, std::span<T>);         \
  template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&);                    \
  template double mse(const BasicTensor<T>&, const BasicTensor<T>&);                            \
  template void mse_backward(const BasicTensor<T>&, const BasicTensor<T>&, T, std::span<T>,     \
                             std::span<T>);                                                     \
  template void accumulate(std::span<const T>, std::span<T>);

SNET_INSTANTIATE_OPS(float)
SNET_INSTANTIATE_OPS(double)

#undef SNET_INSTANTIATE_OPS

}  // namespace snet::ops
