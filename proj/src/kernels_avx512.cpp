// AVX-512 GEMM. Elementwise kernels are shared with the AVX2 table. Built with
// -mavx512f; reached only after the runtime check in kernels_dispatch.cpp.
#include "lagds/kernels.hpp"

#include <immintrin.h>

#include <algorithm>
#include <vector>

namespace lagds::kernels {

const KernelTable& avx2_table_unchecked();

namespace {

constexpr std::size_t kMr = 8;
constexpr std::size_t kNr = 24;
constexpr std::size_t kKc = 256;
constexpr std::size_t kMc = 96;
constexpr std::size_t kNc = 480;

void pack_b(Trans tb, const double* b, std::size_t ldb, std::size_t p0, std::size_t j0,
            std::size_t kc, std::size_t nc, double* out) {
  for (std::size_t js = 0; js < nc; js += kNr) {
    const std::size_t nr = std::min(kNr, nc - js);
    for (std::size_t p = 0; p < kc; ++p) {
      double* dst = out + p * kNr;
      std::size_t j = 0;
      if (tb == Trans::No) {
        const double* src = b + (p0 + p) * ldb + j0 + js;
        for (; j < nr; ++j) dst[j] = src[j];
      } else {
        for (; j < nr; ++j) dst[j] = b[(j0 + js + j) * ldb + p0 + p];
      }
      for (; j < kNr; ++j) dst[j] = 0.0;
    }
    out += kc * kNr;
  }
}

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
  __m512d acc[kMr][3];
  for (auto& row : acc)
    for (auto& v : row) v = _mm512_setzero_pd();
  for (std::size_t p = 0; p < kc; ++p) {
    const __m512d b0 = _mm512_loadu_pd(bp);
    const __m512d b1 = _mm512_loadu_pd(bp + 8);
    const __m512d b2 = _mm512_loadu_pd(bp + 16);
    for (std::size_t i = 0; i < kMr; ++i) {
      const __m512d a = _mm512_set1_pd(ap[i]);
      acc[i][0] = _mm512_fmadd_pd(a, b0, acc[i][0]);
      acc[i][1] = _mm512_fmadd_pd(a, b1, acc[i][1]);
      acc[i][2] = _mm512_fmadd_pd(a, b2, acc[i][2]);
    }
    ap += kMr;
    bp += kNr;
  }
  if (mr == kMr && nr == kNr) {
    for (std::size_t i = 0; i < kMr; ++i) {
      double* r = c + i * ldc;
      _mm512_storeu_pd(r, _mm512_add_pd(_mm512_loadu_pd(r), acc[i][0]));
      _mm512_storeu_pd(r + 8, _mm512_add_pd(_mm512_loadu_pd(r + 8), acc[i][1]));
      _mm512_storeu_pd(r + 16, _mm512_add_pd(_mm512_loadu_pd(r + 16), acc[i][2]));
    }
    return;
  }
  alignas(64) double tile[kMr * kNr];
  for (std::size_t i = 0; i < kMr; ++i) {
    _mm512_store_pd(tile + i * kNr, acc[i][0]);
    _mm512_store_pd(tile + i * kNr + 8, acc[i][1]);
    _mm512_store_pd(tile + i * kNr + 16, acc[i][2]);
  }
  for (std::size_t i = 0; i < mr; ++i) {
    for (std::size_t j = 0; j < nr; ++j) c[i * ldc + j] += tile[i * kNr + j];
  }
}

void gemm_avx512(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, double alpha,
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
  bpack.resize(kKc * kNc);

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

}  // namespace

const KernelTable& avx512_table_unchecked() {
  static const KernelTable table = [] {
    KernelTable t = avx2_table_unchecked();
    t.name = "avx512";
    t.gemm = gemm_avx512;
    return t;
  }();
  return table;
}

}  // namespace lagds::kernels
