// AVX2 + FMA kernel variants. This translation unit is the only one built
// with -mavx2 -mfma; nothing here may be reached unless the runtime check in
// kernels_dispatch.cpp passed.
#include "lagds/kernels.hpp"

#include <immintrin.h>

#include <algorithm>
#include <cmath>
#include <vector>

namespace lagds::kernels {
namespace {

constexpr std::size_t kMr = 4;
constexpr std::size_t kNr = 12;
constexpr std::size_t kKc = 256;
constexpr std::size_t kMc = 96;
constexpr std::size_t kNc = 480;

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

// Packs a kc x nc slice of op(B) into column strips of width kNr, zero padded.
void pack_b(Trans tb, const double* b, std::size_t ldb, std::size_t p0, std::size_t j0,
            std::size_t kc, std::size_t nc, double* out) {
  for (std::size_t js = 0; js < nc; js += kNr) {
    const std::size_t nr = std::min(kNr, nc - js);
    for (std::size_t p = 0; p < kc; ++p) {
      double* dst = out + p * kNr;
      if (tb == Trans::No) {
        const double* src = b + (p0 + p) * ldb + j0 + js;
        std::size_t j = 0;
        for (; j < nr; ++j) dst[j] = src[j];
        for (; j < kNr; ++j) dst[j] = 0.0;
      } else {
        std::size_t j = 0;
        for (; j < nr; ++j) dst[j] = b[(j0 + js + j) * ldb + p0 + p];
        for (; j < kNr; ++j) dst[j] = 0.0;
      }
    }
    out += kc * kNr;
  }
}

// Packs alpha * op(A) rows i0..i0+mc, columns p0..p0+kc into row strips of kMr.
void pack_a(Trans ta, const double* a, std::size_t lda, std::size_t i0, std::size_t p0,
            std::size_t mc, std::size_t kc, double alpha, double* out) {
  for (std::size_t is = 0; is < mc; is += kMr) {
    const std::size_t mr = std::min(kMr, mc - is);
    for (std::size_t p = 0; p < kc; ++p) {
      double* dst = out + p * kMr;
      std::size_t i = 0;
      if (ta == Trans::No) {
        for (; i < mr; ++i) dst[i] = alpha * a[(i0 + is + i) * lda + p0 + p];
      } else {
        const double* src = a + (p0 + p) * lda + i0 + is;
        for (; i < mr; ++i) dst[i] = alpha * src[i];
      }
      for (; i < kMr; ++i) dst[i] = 0.0;
    }
    out += kc * kMr;
  }
}

void micro_kernel(std::size_t kc, const double* ap, const double* bp, double* c, std::size_t ldc,
                  std::size_t mr, std::size_t nr) {
  __m256d c00 = _mm256_setzero_pd(), c01 = _mm256_setzero_pd(), c02 = _mm256_setzero_pd();
  __m256d c10 = _mm256_setzero_pd(), c11 = _mm256_setzero_pd(), c12 = _mm256_setzero_pd();
  __m256d c20 = _mm256_setzero_pd(), c21 = _mm256_setzero_pd(), c22 = _mm256_setzero_pd();
  __m256d c30 = _mm256_setzero_pd(), c31 = _mm256_setzero_pd(), c32 = _mm256_setzero_pd();
  for (std::size_t p = 0; p < kc; ++p) {
    const __m256d b0 = _mm256_loadu_pd(bp);
    const __m256d b1 = _mm256_loadu_pd(bp + 4);
    const __m256d b2 = _mm256_loadu_pd(bp + 8);
    __m256d a = _mm256_broadcast_sd(ap);
    c00 = _mm256_fmadd_pd(a, b0, c00);
    c01 = _mm256_fmadd_pd(a, b1, c01);
    c02 = _mm256_fmadd_pd(a, b2, c02);
    a = _mm256_broadcast_sd(ap + 1);
    c10 = _mm256_fmadd_pd(a, b0, c10);
    c11 = _mm256_fmadd_pd(a, b1, c11);
    c12 = _mm256_fmadd_pd(a, b2, c12);
    a = _mm256_broadcast_sd(ap + 2);
    c20 = _mm256_fmadd_pd(a, b0, c20);
    c21 = _mm256_fmadd_pd(a, b1, c21);
    c22 = _mm256_fmadd_pd(a, b2, c22);
    a = _mm256_broadcast_sd(ap + 3);
    c30 = _mm256_fmadd_pd(a, b0, c30);
    c31 = _mm256_fmadd_pd(a, b1, c31);
    c32 = _mm256_fmadd_pd(a, b2, c32);
    ap += kMr;
    bp += kNr;
  }
  if (mr == kMr && nr == kNr) {
    double* r0 = c;
    double* r1 = c + ldc;
    double* r2 = c + 2 * ldc;
    double* r3 = c + 3 * ldc;
    _mm256_storeu_pd(r0, _mm256_add_pd(_mm256_loadu_pd(r0), c00));
    _mm256_storeu_pd(r0 + 4, _mm256_add_pd(_mm256_loadu_pd(r0 + 4), c01));
    _mm256_storeu_pd(r0 + 8, _mm256_add_pd(_mm256_loadu_pd(r0 + 8), c02));
    _mm256_storeu_pd(r1, _mm256_add_pd(_mm256_loadu_pd(r1), c10));
    _mm256_storeu_pd(r1 + 4, _mm256_add_pd(_mm256_loadu_pd(r1 + 4), c11));
    _mm256_storeu_pd(r1 + 8, _mm256_add_pd(_mm256_loadu_pd(r1 + 8), c12));
    _mm256_storeu_pd(r2, _mm256_add_pd(_mm256_loadu_pd(r2), c20));
    _mm256_storeu_pd(r2 + 4, _mm256_add_pd(_mm256_loadu_pd(r2 + 4), c21));
    _mm256_storeu_pd(r2 + 8, _mm256_add_pd(_mm256_loadu_pd(r2 + 8), c22));
    _mm256_storeu_pd(r3, _mm256_add_pd(_mm256_loadu_pd(r3), c30));
    _mm256_storeu_pd(r3 + 4, _mm256_add_pd(_mm256_loadu_pd(r3 + 4), c31));
    _mm256_storeu_pd(r3 + 8, _mm256_add_pd(_mm256_loadu_pd(r3 + 8), c32));
    return;
  }
  alignas(32) double tile[kMr * kNr];
  _mm256_store_pd(tile + 0, c00);
  _mm256_store_pd(tile + 4, c01);
  _mm256_store_pd(tile + 8, c02);
  _mm256_store_pd(tile + 12, c10);
  _mm256_store_pd(tile + 16, c11);
  _mm256_store_pd(tile + 20, c12);
  _mm256_store_pd(tile + 24, c20);
  _mm256_store_pd(tile + 28, c21);
  _mm256_store_pd(tile + 32, c22);
  _mm256_store_pd(tile + 36, c30);
  _mm256_store_pd(tile + 40, c31);
  _mm256_store_pd(tile + 44, c32);
  for (std::size_t i = 0; i < mr; ++i) {
    for (std::size_t j = 0; j < nr; ++j) c[i * ldc + j] += tile[i * kNr + j];
  }
}

void gemm_avx2(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, double alpha,
               const double* a, std::size_t lda, const double* b, std::size_t ldb, double beta,
               double* c, std::size_t ldc) {
  if (m == 0 || n == 0) return;
  if (beta != 1.0) {
    for (std::size_t i = 0; i < m; ++i) {
      double* row = c + i * ldc;
      if (beta == 0.0) {
        std::fill(row, row + n, 0.0);
      } else {
        for (std::size_t j = 0; j < n; ++j) row[j] *= beta;
      }
    }
  }
  if (k == 0 || alpha == 0.0) return;

  thread_local std::vector<double> apack;
  thread_local std::vector<double> bpack;
  apack.resize(kMc * kKc);
  bpack.resize(kKc * ((kNc + kNr - 1) / kNr) * kNr);

  for (std::size_t jc = 0; jc < n; jc += kNc) {
    const std::size_t nc = std::min(kNc, n - jc);
    for (std::size_t pc = 0; pc < k; pc += kKc) {
      const std::size_t kc = std::min(kKc, k - pc);
      pack_b(tb, b, ldb, pc, jc, kc, nc, bpack.data());
      for (std::size_t ic = 0; ic < m; ic += kMc) {
        const std::size_t mc = std::min(kMc, m - ic);
        pack_a(ta, a, lda, ic, pc, mc, kc, alpha, apack.data());
        for (std::size_t js = 0; js < nc; js += kNr) {
          const std::size_t nr = std::min(kNr, nc - js);
          const double* bp = bpack.data() + (js / kNr) * kc * kNr;
          for (std::size_t is = 0; is < mc; is += kMr) {
            const std::size_t mr = std::min(kMr, mc - is);
            const double* ap = apack.data() + (is / kMr) * kc * kMr;
            micro_kernel(kc, ap, bp, c + (ic + is) * ldc + jc + js, ldc, mr, nr);
          }
        }
      }
    }
  }
}

void axpy_avx2(std::size_t n, double a, const double* x, double* y) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

void axpby_avx2(std::size_t n, double a, const double* x, double b, const double* y, double* z) {
  const __m256d va = _mm256_set1_pd(a);
  const __m256d vb = _mm256_set1_pd(b);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d t = _mm256_mul_pd(vb, _mm256_loadu_pd(y + i));
    _mm256_storeu_pd(z + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), t));
  }
  for (; i < n; ++i) z[i] = a * x[i] + b * y[i];
}

void mul_avx2(std::size_t n, const double* x, const double* y, double* z) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(z + i, _mm256_mul_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) z[i] = x[i] * y[i];
}

double dot_avx2(std::size_t n, const double* x, const double* y) {
  __m256d s0 = _mm256_setzero_pd(), s1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    s0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), s0);
    s1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), s1);
  }
  double s = hsum(_mm256_add_pd(s0, s1));
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

double sum_avx2(std::size_t n, const double* x) {
  __m256d s0 = _mm256_setzero_pd(), s1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    s0 = _mm256_add_pd(_mm256_loadu_pd(x + i), s0);
    s1 = _mm256_add_pd(_mm256_loadu_pd(x + i + 4), s1);
  }
  double s = hsum(_mm256_add_pd(s0, s1));
  for (; i < n; ++i) s += x[i];
  return s;
}

void leaky_mask_avx2(std::size_t n, const double* x, double slope, double* mask) {
  const __m256d zero = _mm256_setzero_pd();
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d vs = _mm256_set1_pd(slope);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d pos = _mm256_cmp_pd(_mm256_loadu_pd(x + i), zero, _CMP_GT_OQ);
    _mm256_storeu_pd(mask + i, _mm256_blendv_pd(vs, one, pos));
  }
  for (; i < n; ++i) mask[i] = x[i] > 0.0 ? 1.0 : slope;
}

void adam_avx2(std::size_t n, double* param, const double* grad, double* m, double* v, double b1,
               double b2, double step_size, double eps_hat) {
  const __m256d vb1 = _mm256_set1_pd(b1), vc1 = _mm256_set1_pd(1.0 - b1);
  const __m256d vb2 = _mm256_set1_pd(b2), vc2 = _mm256_set1_pd(1.0 - b2);
  const __m256d vstep = _mm256_set1_pd(step_size), veps = _mm256_set1_pd(eps_hat);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d g = _mm256_loadu_pd(grad + i);
    const __m256d mi =
        _mm256_add_pd(_mm256_mul_pd(vb1, _mm256_loadu_pd(m + i)), _mm256_mul_pd(vc1, g));
    const __m256d vi = _mm256_add_pd(_mm256_mul_pd(vb2, _mm256_loadu_pd(v + i)),
                                     _mm256_mul_pd(_mm256_mul_pd(vc2, g), g));
    const __m256d den = _mm256_add_pd(_mm256_sqrt_pd(vi), veps);
    const __m256d upd = _mm256_div_pd(_mm256_mul_pd(vstep, mi), den);
    _mm256_storeu_pd(m + i, mi);
    _mm256_storeu_pd(v + i, vi);
    _mm256_storeu_pd(param + i, _mm256_sub_pd(_mm256_loadu_pd(param + i), upd));
  }
  for (; i < n; ++i) {
    const double g = grad[i];
    m[i] = b1 * m[i] + (1.0 - b1) * g;
    v[i] = b2 * v[i] + (1.0 - b2) * g * g;
    param[i] -= step_size * m[i] / (std::sqrt(v[i]) + eps_hat);
  }
}

}  // namespace

const KernelTable& avx2_table_unchecked() {
  static const KernelTable table{"avx2",   gemm_avx2, axpy_avx2,       axpby_avx2, mul_avx2,
                                 dot_avx2, sum_avx2,  leaky_mask_avx2, adam_avx2};
  return table;
}

}  // namespace lagds::kernels
