#include "lagds/kernels.hpp"

#include <cmath>

namespace lagds::kernels {
namespace {

void gemm_scalar(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, double alpha,
                 const double* a, std::size_t lda, const double* b, std::size_t ldb, double beta,
                 double* c, std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * ldc;
    if (beta == 0.0) {
      for (std::size_t j = 0; j < n; ++j) crow[j] = 0.0;
    } else if (beta != 1.0) {
      for (std::size_t j = 0; j < n; ++j) crow[j] *= beta;
    }
    for (std::size_t p = 0; p < k; ++p) {
      const double av = alpha * (ta == Trans::No ? a[i * lda + p] : a[p * lda + i]);
      if (tb == Trans::No) {
        const double* brow = b + p * ldb;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      } else {
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * b[j * ldb + p];
      }
    }
  }
}

void axpy_scalar(std::size_t n, double a, const double* x, double* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void axpby_scalar(std::size_t n, double a, const double* x, double b, const double* y, double* z) {
  for (std::size_t i = 0; i < n; ++i) z[i] = a * x[i] + b * y[i];
}

void mul_scalar(std::size_t n, const double* x, const double* y, double* z) {
  for (std::size_t i = 0; i < n; ++i) z[i] = x[i] * y[i];
}

double dot_scalar(std::size_t n, const double* x, const double* y) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

double sum_scalar(std::size_t n, const double* x) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i];
  return s;
}

void leaky_mask_scalar(std::size_t n, const double* x, double slope, double* mask) {
  for (std::size_t i = 0; i < n; ++i) mask[i] = x[i] > 0.0 ? 1.0 : slope;
}

void adam_scalar(std::size_t n, double* param, const double* grad, double* m, double* v, double b1,
                 double b2, double step_size, double eps_hat) {
  for (std::size_t i = 0; i < n; ++i) {
    const double g = grad[i];
    m[i] = b1 * m[i] + (1.0 - b1) * g;
    v[i] = b2 * v[i] + (1.0 - b2) * g * g;
    param[i] -= step_size * m[i] / (std::sqrt(v[i]) + eps_hat);
  }
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable table{"scalar",    gemm_scalar, axpy_scalar,       axpby_scalar,
                                 mul_scalar,  dot_scalar,  sum_scalar,        leaky_mask_scalar,
                                 adam_scalar};
  return table;
}

}  // namespace lagds::kernels
