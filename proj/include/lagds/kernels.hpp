#pragma once
// Dense numeric kernels used by the tensor engine.
//
// Every kernel has a portable scalar reference implementation. On x86-64 an
// AVX2/FMA variant is compiled into its own translation unit and selected at
// runtime when the CPU supports it. Both variants compute the same
// mathematical result; they differ only in floating-point summation order.

#include <cstddef>
#include <string_view>

namespace lagds::kernels {

enum class Trans { No, Yes };

// C = alpha * op(A) * op(B) + beta * C, row-major.
// op(A) is M x K, op(B) is K x N, C is M x N.
using GemmFn = void (*)(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k,
                        double alpha, const double* a, std::size_t lda, const double* b,
                        std::size_t ldb, double beta, double* c, std::size_t ldc);

// y += a * x
using AxpyFn = void (*)(std::size_t n, double a, const double* x, double* y);
// z = a * x + b * y (z may alias x or y)
using AxpbyFn = void (*)(std::size_t n, double a, const double* x, double b, const double* y,
                         double* z);
// z = x * y elementwise (z may alias x or y)
using MulFn = void (*)(std::size_t n, const double* x, const double* y, double* z);
using DotFn = double (*)(std::size_t n, const double* x, const double* y);
using SumFn = double (*)(std::size_t n, const double* x);
// mask[i] = x[i] > 0 ? 1 : slope
using LeakyMaskFn = void (*)(std::size_t n, const double* x, double slope, double* mask);

// One Adam step with bias-corrected rates folded into step_size / eps_hat:
//   m = b1*m + (1-b1)*g ; v = b2*v + (1-b2)*g^2 ; p -= step_size * m / (sqrt(v) + eps_hat)
using AdamFn = void (*)(std::size_t n, double* param, const double* grad, double* m, double* v,
                        double b1, double b2, double step_size, double eps_hat);

struct KernelTable {
  std::string_view name;
  GemmFn gemm;
  AxpyFn axpy;
  AxpbyFn axpby;
  MulFn mul;
  DotFn dot;
  SumFn sum;
  LeakyMaskFn leaky_mask;
  AdamFn adam;
};

enum class Backend { Scalar, Avx2, Avx512 };

const KernelTable& scalar_table();

// Null when the variant was not compiled in or the CPU lacks the instructions.
const KernelTable* avx2_table();
// AVX2 table with an AVX-512 GEMM.
const KernelTable* avx512_table();

// Active table. Chosen on first use: the LAGDS_KERNELS environment variable
// ("scalar", "avx2" or "avx512") wins, otherwise the widest supported variant.
const KernelTable& active();

// Returns false if the requested backend is unavailable on this machine.
bool select_backend(Backend b);

}  // namespace lagds::kernels
