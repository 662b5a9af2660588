#pragma once

// Numeric inner loops used by the tensor engine and the optimizer.
//
// Every kernel exists as a portable scalar reference (kernels_ref.hpp) and,
// where the CPU supports it, an AVX2+FMA variant. The variant is chosen once
// at startup; SNET_ISA=scalar in the environment forces the reference path.
// Both paths are deterministic for identical inputs, but they are not
// bit-identical to each other (different summation order).

#include <cstddef>
#include <string_view>

namespace snet::kernels {

enum class Transpose : bool { kNo = false, kYes = true };

enum class Isa { kScalar, kAvx2 };

struct AdamCoeffs {
  float lr = 0.0f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
  float bias_correction1 = 1.0f;  // 1 - beta1^t
  float bias_correction2 = 1.0f;  // 1 - beta2^t
};

// Row-major C = op(A) * op(B) + beta * C, where op(A) is m x k and op(B) is
// k x n. lda/ldb/ldc are row strides of the matrices as stored.
using GemmFn = void (*)(Transpose ta, Transpose tb, std::size_t m, std::size_t n,
                        std::size_t k, const float* a, std::size_t lda, const float* b,
                        std::size_t ldb, float beta, float* c, std::size_t ldc);

struct KernelTable {
  Isa isa;
  std::string_view name;
  GemmFn gemm;
  // y = max(0, x)
  void (*relu)(const float* x, float* y, std::size_t n);
  // dx += dy where x > 0
  void (*relu_backward)(const float* x, const float* dy, float* dx, std::size_t n);
  // y = a + b
  void (*add)(const float* a, const float* b, float* y, std::size_t n);
  // y += x
  void (*accumulate)(const float* x, float* y, std::size_t n);
  // sum of (a - b)^2, accumulated in double
  double (*squared_error)(const float* a, const float* b, std::size_t n);
  // dx += scale * (a - b)
  void (*scaled_difference)(const float* a, const float* b, float scale, float* dx,
                            std::size_t n);
  // sum of x, accumulated in double
  double (*sum)(const float* x, std::size_t n);
  void (*adam_update)(float* theta, const float* grad, float* m, float* v, std::size_t n,
                      const AdamCoeffs& coeffs);

  // Direct k x k correlation for layers too narrow for GEMM to pay off.
  // xp holds `channels` zero-bordered planes of (h + k - 1) rows with row
  // stride ldx >= round_up(width, 8) + k - 1; the padding must be finite.
  // y[o][i][j] += sum_{c,u,v} w[o][c][u][v] * xp[c][i+u][j+v]
  void (*conv_direct)(const float* xp, std::size_t channels, std::size_t ldx, const float* w,
                      std::size_t out, std::size_t k, std::size_t h, std::size_t width, float* y);
  // dw[o][c][u][v] += sum_{i,j} g[o][i][j] * xp[c][i+u][j+v]. Rows of g have
  // stride ldg, a multiple of 8, and are zero past `width`.
  void (*conv_weight_grad)(const float* xp, std::size_t channels, std::size_t ldx, const float* g,
                           std::size_t ldg, std::size_t out, std::size_t k, std::size_t h,
                           std::size_t width, float* dw);
};

// Row stride conv_direct / conv_weight_grad expect for a padded input.
inline constexpr std::size_t padded_stride(std::size_t width, std::size_t k) {
  return (width + 7) / 8 * 8 + k - 1;
}

bool isa_supported(Isa isa);

// Throws std::invalid_argument when the ISA is not supported on this CPU.
const KernelTable& table(Isa isa);

// The table used by the engine. Defaults to the best supported ISA.
const KernelTable& active();

// Overrides the active table (tests and benchmarking).
void set_active(Isa isa);

namespace detail {
const KernelTable& scalar_table();
const KernelTable& avx2_table();
}  // namespace detail

}  // namespace snet::kernels
