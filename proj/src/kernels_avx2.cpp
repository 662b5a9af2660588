// AVX2+FMA kernels. Functions carry a target attribute instead of compiling
// the translation unit with -mavx2, so nothing here leaks VEX code into
// inline functions shared with the scalar path.

#include <algorithm>
#include <cstddef>
#include <cstring>
#include <vector>

#include "snet/kernels.hpp"
#include "snet/kernels_ref.hpp"

#if defined(__x86_64__) || defined(__i386__)
#include <immintrin.h>
#define SNET_AVX2 __attribute__((target("avx2,fma")))
#define SNET_HAVE_X86 1
#endif

namespace snet::kernels::detail {

#if SNET_HAVE_X86
namespace {

constexpr std::size_t kMr = 6;
constexpr std::size_t kNr = 16;
constexpr std::size_t kMc = 72;
constexpr std::size_t kKc = 256;
constexpr std::size_t kNc = 2048;

struct PackBuffers {
  std::vector<float> a;
  std::vector<float> b;
};

PackBuffers& pack_buffers() {
  thread_local PackBuffers buffers;
  return buffers;
}

// Packs op(A)[i0:i0+mc, p0:p0+kc] into kMr-row panels, p-major within a panel.
void pack_a(Transpose ta, const float* a, std::size_t lda, std::size_t i0, std::size_t mc,
            std::size_t p0, std::size_t kc, float* dst) {
  for (std::size_t ib = 0; ib < mc; ib += kMr) {
    const std::size_t mr = std::min(kMr, mc - ib);
    if (ta == Transpose::kNo) {
      for (std::size_t r = 0; r < kMr; ++r) {
        if (r < mr) {
          const float* src = a + (i0 + ib + r) * lda + p0;
          for (std::size_t p = 0; p < kc; ++p) dst[p * kMr + r] = src[p];
        } else {
          for (std::size_t p = 0; p < kc; ++p) dst[p * kMr + r] = 0.0f;
        }
      }
    } else {
      for (std::size_t p = 0; p < kc; ++p) {
        const float* src = a + (p0 + p) * lda + i0 + ib;
        for (std::size_t r = 0; r < kMr; ++r) dst[p * kMr + r] = r < mr ? src[r] : 0.0f;
      }
    }
    dst += kMr * kc;
  }
}

// Packs op(B)[p0:p0+kc, j0:j0+nc] into kNr-column panels, p-major within a panel.
void pack_b(Transpose tb, const float* b, std::size_t ldb, std::size_t p0, std::size_t kc,
            std::size_t j0, std::size_t nc, float* dst) {
  for (std::size_t jb = 0; jb < nc; jb += kNr) {
    const std::size_t nr = std::min(kNr, nc - jb);
    if (tb == Transpose::kNo) {
      for (std::size_t p = 0; p < kc; ++p) {
        const float* src = b + (p0 + p) * ldb + j0 + jb;
        float* out = dst + p * kNr;
        if (nr == kNr) {
          std::memcpy(out, src, kNr * sizeof(float));
        } else {
          for (std::size_t j = 0; j < kNr; ++j) out[j] = j < nr ? src[j] : 0.0f;
        }
      }
    } else {
      for (std::size_t j = 0; j < kNr; ++j) {
        if (j < nr) {
          const float* src = b + (j0 + jb + j) * ldb + p0;
          for (std::size_t p = 0; p < kc; ++p) dst[p * kNr + j] = src[p];
        } else {
          for (std::size_t p = 0; p < kc; ++p) dst[p * kNr + j] = 0.0f;
        }
      }
    }
    dst += kNr * kc;
  }
}

SNET_AVX2 inline __m256 blend_beta(__m256 acc, const float* c, float beta) {
  if (beta == 0.0f) return acc;
  const __m256 old = _mm256_loadu_ps(c);
  if (beta == 1.0f) return _mm256_add_ps(acc, old);
  return _mm256_fmadd_ps(_mm256_set1_ps(beta), old, acc);
}

SNET_AVX2 void micro_kernel(std::size_t kc, const float* pa, const float* pb, float* c,
                            std::size_t ldc, std::size_t mr, std::size_t nr, float beta) {
  __m256 c00 = _mm256_setzero_ps(), c01 = _mm256_setzero_ps();
  __m256 c10 = _mm256_setzero_ps(), c11 = _mm256_setzero_ps();
  __m256 c20 = _mm256_setzero_ps(), c21 = _mm256_setzero_ps();
  __m256 c30 = _mm256_setzero_ps(), c31 = _mm256_setzero_ps();
  __m256 c40 = _mm256_setzero_ps(), c41 = _mm256_setzero_ps();
  __m256 c50 = _mm256_setzero_ps(), c51 = _mm256_setzero_ps();
  for (std::size_t p = 0; p < kc; ++p) {
    const __m256 b0 = _mm256_loadu_ps(pb);
    const __m256 b1 = _mm256_loadu_ps(pb + 8);
    __m256 av = _mm256_broadcast_ss(pa);
    c00 = _mm256_fmadd_ps(av, b0, c00);
    c01 = _mm256_fmadd_ps(av, b1, c01);
    av = _mm256_broadcast_ss(pa + 1);
    c10 = _mm256_fmadd_ps(av, b0, c10);
    c11 = _mm256_fmadd_ps(av, b1, c11);
    av = _mm256_broadcast_ss(pa + 2);
    c20 = _mm256_fmadd_ps(av, b0, c20);
    c21 = _mm256_fmadd_ps(av, b1, c21);
    av = _mm256_broadcast_ss(pa + 3);
    c30 = _mm256_fmadd_ps(av, b0, c30);
    c31 = _mm256_fmadd_ps(av, b1, c31);
    av = _mm256_broadcast_ss(pa + 4);
    c40 = _mm256_fmadd_ps(av, b0, c40);
    c41 = _mm256_fmadd_ps(av, b1, c41);
    av = _mm256_broadcast_ss(pa + 5);
    c50 = _mm256_fmadd_ps(av, b0, c50);
    c51 = _mm256_fmadd_ps(av, b1, c51);
    pa += kMr;
    pb += kNr;
  }
  const __m256 acc[kMr][2] = {{c00, c01}, {c10, c11}, {c20, c21},
                              {c30, c31}, {c40, c41}, {c50, c51}};
  if (mr == kMr && nr == kNr) {
    for (std::size_t r = 0; r < kMr; ++r) {
      float* row = c + r * ldc;
      _mm256_storeu_ps(row, blend_beta(acc[r][0], row, beta));
      _mm256_storeu_ps(row + 8, blend_beta(acc[r][1], row + 8, beta));
    }
    return;
  }
  alignas(32) float tile[kMr * kNr];
  for (std::size_t r = 0; r < kMr; ++r) {
    _mm256_store_ps(tile + r * kNr, acc[r][0]);
    _mm256_store_ps(tile + r * kNr + 8, acc[r][1]);
  }
  for (std::size_t r = 0; r < mr; ++r) {
    float* row = c + r * ldc;
    for (std::size_t j = 0; j < nr; ++j) {
      const float v = tile[r * kNr + j];
      row[j] = beta == 0.0f ? v : beta * row[j] + v;
    }
  }
}

SNET_AVX2 void gemm(Transpose ta, Transpose tb, std::size_t m, std::size_t n, std::size_t k,
                    const float* a, std::size_t lda, const float* b, std::size_t ldb, float beta,
                    float* c, std::size_t ldc) {
  if (m == 0 || n == 0) return;
  if (k == 0) {
    for (std::size_t i = 0; i < m; ++i) {
      float* row = c + i * ldc;
      for (std::size_t j = 0; j < n; ++j) row[j] = beta == 0.0f ? 0.0f : beta * row[j];
    }
    return;
  }
  PackBuffers& buf = pack_buffers();
  const std::size_t kc_max = std::min(kKc, k);
  const std::size_t mc_max = std::min(kMc, (m + kMr - 1) / kMr * kMr);
  const std::size_t nc_max = std::min(kNc, (n + kNr - 1) / kNr * kNr);
  buf.a.resize(std::max(buf.a.size(), mc_max * kc_max + kMr * kc_max));
  buf.b.resize(std::max(buf.b.size(), nc_max * kc_max + kNr * kc_max));

  for (std::size_t jc = 0; jc < n; jc += kNc) {
    const std::size_t nc = std::min(kNc, n - jc);
    for (std::size_t pc = 0; pc < k; pc += kKc) {
      const std::size_t kc = std::min(kKc, k - pc);
      const float pass_beta = pc == 0 ? beta : 1.0f;
      pack_b(tb, b, ldb, pc, kc, jc, nc, buf.b.data());
      for (std::size_t ic = 0; ic < m; ic += kMc) {
        const std::size_t mc = std::min(kMc, m - ic);
        pack_a(ta, a, lda, ic, mc, pc, kc, buf.a.data());
        for (std::size_t jr = 0; jr < nc; jr += kNr) {
          const std::size_t nr = std::min(kNr, nc - jr);
          const float* pb = buf.b.data() + (jr / kNr) * kNr * kc;
          for (std::size_t ir = 0; ir < mc; ir += kMr) {
            const std::size_t mr = std::min(kMr, mc - ir);
            const float* pa = buf.a.data() + (ir / kMr) * kMr * kc;
            micro_kernel(kc, pa, pb, c + (ic + ir) * ldc + jc + jr, ldc, mr, nr, pass_beta);
          }
        }
      }
    }
  }
}

SNET_AVX2 void relu(const float* x, float* y, std::size_t n) {
  const __m256 zero = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) _mm256_storeu_ps(y + i, _mm256_max_ps(_mm256_loadu_ps(x + i), zero));
  for (; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

SNET_AVX2 void relu_backward(const float* x, const float* dy, float* dx, std::size_t n) {
  const __m256 zero = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 mask = _mm256_cmp_ps(_mm256_loadu_ps(x + i), zero, _CMP_GT_OQ);
    const __m256 g = _mm256_and_ps(mask, _mm256_loadu_ps(dy + i));
    _mm256_storeu_ps(dx + i, _mm256_add_ps(_mm256_loadu_ps(dx + i), g));
  }
  for (; i < n; ++i) {
    if (x[i] > 0.0f) dx[i] += dy[i];
  }
}

SNET_AVX2 void add(const float* a, const float* b, float* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(y + i, _mm256_add_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  }
  for (; i < n; ++i) y[i] = a[i] + b[i];
}

SNET_AVX2 void accumulate(const float* x, float* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(y + i, _mm256_add_ps(_mm256_loadu_ps(y + i), _mm256_loadu_ps(x + i)));
  }
  for (; i < n; ++i) y[i] += x[i];
}

SNET_AVX2 double horizontal_sum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

SNET_AVX2 double squared_error(const float* a, const float* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd(), acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 va = _mm256_loadu_ps(a + i), vb = _mm256_loadu_ps(b + i);
    const __m256d lo = _mm256_sub_pd(_mm256_cvtps_pd(_mm256_castps256_ps128(va)),
                                     _mm256_cvtps_pd(_mm256_castps256_ps128(vb)));
    const __m256d hi = _mm256_sub_pd(_mm256_cvtps_pd(_mm256_extractf128_ps(va, 1)),
                                     _mm256_cvtps_pd(_mm256_extractf128_ps(vb, 1)));
    acc0 = _mm256_fmadd_pd(lo, lo, acc0);
    acc1 = _mm256_fmadd_pd(hi, hi, acc1);
  }
  double total = horizontal_sum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    total += d * d;
  }
  return total;
}

SNET_AVX2 void scaled_difference(const float* a, const float* b, float scale, float* dx,
                                 std::size_t n) {
  const __m256 s = _mm256_set1_ps(scale);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 d = _mm256_sub_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i));
    _mm256_storeu_ps(dx + i, _mm256_fmadd_ps(s, d, _mm256_loadu_ps(dx + i)));
  }
  for (; i < n; ++i) dx[i] += scale * (a[i] - b[i]);
}

SNET_AVX2 double sum(const float* x, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd(), acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 v = _mm256_loadu_ps(x + i);
    acc0 = _mm256_add_pd(acc0, _mm256_cvtps_pd(_mm256_castps256_ps128(v)));
    acc1 = _mm256_add_pd(acc1, _mm256_cvtps_pd(_mm256_extractf128_ps(v, 1)));
  }
  double total = horizontal_sum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) total += static_cast<double>(x[i]);
  return total;
}

SNET_AVX2 void adam_update(float* theta, const float* grad, float* m, float* v, std::size_t n,
                           const AdamCoeffs& c) {
  const __m256 b1 = _mm256_set1_ps(c.beta1), nb1 = _mm256_set1_ps(1.0f - c.beta1);
  const __m256 b2 = _mm256_set1_ps(c.beta2), nb2 = _mm256_set1_ps(1.0f - c.beta2);
  const __m256 bc1 = _mm256_set1_ps(c.bias_correction1);
  const __m256 bc2 = _mm256_set1_ps(c.bias_correction2);
  const __m256 lr = _mm256_set1_ps(c.lr), eps = _mm256_set1_ps(c.eps);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 g = _mm256_loadu_ps(grad + i);
    const __m256 mi = _mm256_add_ps(_mm256_mul_ps(b1, _mm256_loadu_ps(m + i)), _mm256_mul_ps(nb1, g));
    const __m256 vi = _mm256_add_ps(_mm256_mul_ps(b2, _mm256_loadu_ps(v + i)),
                                    _mm256_mul_ps(_mm256_mul_ps(nb2, g), g));
    _mm256_storeu_ps(m + i, mi);
    _mm256_storeu_ps(v + i, vi);
    const __m256 m_hat = _mm256_div_ps(mi, bc1);
    const __m256 v_hat = _mm256_div_ps(vi, bc2);
    const __m256 step =
        _mm256_div_ps(_mm256_mul_ps(lr, m_hat), _mm256_add_ps(_mm256_sqrt_ps(v_hat), eps));
    _mm256_storeu_ps(theta + i, _mm256_sub_ps(_mm256_loadu_ps(theta + i), step));
  }
  if (i < n) ref::adam_update<float>(theta + i, grad + i, m + i, v + i, n - i, c);
}

template <int NV>
SNET_AVX2 void conv_direct_strip(const float* xp, std::size_t channels, std::size_t plane, std::size_t ldx,
                                 const float* w, std::size_t k, float* dst, std::size_t cols) {
  __m256 acc[NV];
  for (int t = 0; t < NV; ++t) acc[t] = _mm256_setzero_ps();
  for (std::size_t c = 0; c < channels; ++c) {
    const float* xc = xp + c * plane;
    const float* wc = w + c * k * k;
    for (std::size_t u = 0; u < k; ++u) {
      const float* row = xc + u * ldx;
      for (std::size_t v = 0; v < k; ++v) {
        const __m256 wv = _mm256_broadcast_ss(wc + u * k + v);
        for (int t = 0; t < NV; ++t) acc[t] = _mm256_fmadd_ps(wv, _mm256_loadu_ps(row + v + 8 * t), acc[t]);
      }
    }
  }
  for (int t = 0; t < NV; ++t) {
    const std::size_t j = 8 * static_cast<std::size_t>(t);
    if (j + 8 <= cols) {
      _mm256_storeu_ps(dst + j, _mm256_add_ps(_mm256_loadu_ps(dst + j), acc[t]));
    } else {
      alignas(32) float tmp[8];
      _mm256_store_ps(tmp, acc[t]);
      for (std::size_t r = 0; j + r < cols; ++r) dst[j + r] += tmp[r];
    }
  }
}

SNET_AVX2 void conv_direct(const float* xp, std::size_t channels, std::size_t ldx, const float* w,
                           std::size_t out, std::size_t k, std::size_t h, std::size_t width, float* y) {
  const std::size_t plane = (h + k - 1) * ldx;
  for (std::size_t o = 0; o < out; ++o) {
    const float* wo = w + o * channels * k * k;
    for (std::size_t i = 0; i < h; ++i) {
      float* dst = y + (o * h + i) * width;
      const float* src = xp + i * ldx;
      for (std::size_t j = 0; j < width; j += 32) {
        const std::size_t cols = std::min<std::size_t>(32, width - j);
        switch ((cols + 7) / 8) {
          case 1: conv_direct_strip<1>(src + j, channels, plane, ldx, wo, k, dst + j, cols); break;
          case 2: conv_direct_strip<2>(src + j, channels, plane, ldx, wo, k, dst + j, cols); break;
          case 3: conv_direct_strip<3>(src + j, channels, plane, ldx, wo, k, dst + j, cols); break;
          default: conv_direct_strip<4>(src + j, channels, plane, ldx, wo, k, dst + j, cols); break;
        }
      }
    }
  }
}

SNET_AVX2 float horizontal_sum(__m256 v) {
  const __m128 s = _mm_add_ps(_mm256_castps256_ps128(v), _mm256_extractf128_ps(v, 1));
  const __m128 t = _mm_add_ps(s, _mm_movehl_ps(s, s));
  return _mm_cvtss_f32(_mm_add_ss(t, _mm_shuffle_ps(t, t, 1)));
}

constexpr std::size_t kMaxDirectK = 7;

SNET_AVX2 void conv_weight_grad(const float* xp, std::size_t channels, std::size_t ldx, const float* g,
                                std::size_t ldg, std::size_t out, std::size_t k, std::size_t h,
                                std::size_t width, float* dw) {
  if (k > kMaxDirectK) {
    ref::conv_weight_grad<float>(xp, channels, ldx, g, ldg, out, k, h, width, dw);
    return;
  }
  const std::size_t plane = (h + k - 1) * ldx;
  const std::size_t span = (width + 7) / 8 * 8;
  for (std::size_t o = 0; o < out; ++o) {
    const float* go = g + o * h * ldg;
    for (std::size_t c = 0; c < channels; ++c) {
      const float* xc = xp + c * plane;
      float* dwc = dw + (o * channels + c) * k * k;
      for (std::size_t u = 0; u < k; ++u) {
        __m256 acc[kMaxDirectK];
        for (std::size_t v = 0; v < k; ++v) acc[v] = _mm256_setzero_ps();
        for (std::size_t i = 0; i < h; ++i) {
          const float* row = xc + (i + u) * ldx;
          const float* gr = go + i * ldg;
          for (std::size_t j = 0; j < span; j += 8) {
            const __m256 gv = _mm256_loadu_ps(gr + j);
            for (std::size_t v = 0; v < k; ++v) acc[v] = _mm256_fmadd_ps(gv, _mm256_loadu_ps(row + j + v), acc[v]);
          }
        }
        for (std::size_t v = 0; v < k; ++v) dwc[u * k + v] += horizontal_sum(acc[v]);
      }
    }
  }
}

}  // namespace

const KernelTable& avx2_table() {
  static const KernelTable table{
      Isa::kAvx2,    "avx2",       &gemm, &relu,         &relu_backward,     &add,
      &accumulate,   &squared_error,     &scaled_difference, &sum, &adam_update,
      &conv_direct,  &conv_weight_grad,
  };
  return table;
}

#else

const KernelTable& avx2_table() { return scalar_table(); }

#endif

}  // namespace snet::kernels::detail
