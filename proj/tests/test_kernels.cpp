#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "lagds/kernels.hpp"

using namespace lagds::kernels;

namespace {

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> dist;
  std::vector<double> v(n);
  for (double& x : v) x = dist(rng);
  return v;
}

// Textbook triple loop, independent of both kernel variants.
std::vector<double> naive_gemm(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k,
                               double alpha, const std::vector<double>& a,
                               const std::vector<double>& b, double beta,
                               std::vector<double> c) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      long double s = 0;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = ta ? a[p * m + i] : a[i * k + p];
        const double bv = tb ? b[j * k + p] : b[p * n + j];
        s += static_cast<long double>(av) * bv;
      }
      c[i * n + j] = static_cast<double>(alpha * s + beta * c[i * n + j]);
    }
  }
  return c;
}

std::vector<const KernelTable*> tables() {
  std::vector<const KernelTable*> out{&scalar_table()};
  if (avx2_table() != nullptr) out.push_back(avx2_table());
  if (avx512_table() != nullptr) out.push_back(avx512_table());
  return out;
}

}  // namespace

TEST_CASE("gemm matches the naive oracle for every transpose combination") {
  std::mt19937_64 rng(11);
  const std::size_t shapes[][3] = {{1, 1, 1}, {3, 5, 7}, {4, 12, 9}, {17, 29, 300}, {98, 13, 40},
                                   {8, 64, 18}, {130, 500, 3}};
  for (const KernelTable* t : tables()) {
    CAPTURE(t->name);
    for (const auto& s : shapes) {
      const std::size_t m = s[0], n = s[1], k = s[2];
      for (int ta = 0; ta < 2; ++ta) {
        for (int tb = 0; tb < 2; ++tb) {
          const auto a = random_vec(m * k, rng);
          const auto b = random_vec(k * n, rng);
          auto c = random_vec(m * n, rng);
          const double alpha = 0.75, beta = -0.5;
          const auto expect = naive_gemm(ta, tb, m, n, k, alpha, a, b, beta, c);
          t->gemm(ta ? Trans::Yes : Trans::No, tb ? Trans::Yes : Trans::No, m, n, k, alpha,
                  a.data(), ta ? m : k, b.data(), tb ? k : n, beta, c.data(), n);
          double worst = 0;
          for (std::size_t i = 0; i < c.size(); ++i) {
            worst = std::max(worst, std::abs(c[i] - expect[i]) / (1.0 + std::abs(expect[i])));
          }
          CHECK(worst < 1e-12);
        }
      }
    }
  }
}

TEST_CASE("gemm with beta zero ignores garbage in C") {
  std::mt19937_64 rng(3);
  for (const KernelTable* t : tables()) {
    const auto a = random_vec(6 * 5, rng);
    const auto b = random_vec(5 * 7, rng);
    std::vector<double> c(6 * 7, std::nan(""));
    t->gemm(Trans::No, Trans::No, 6, 7, 5, 1.0, a.data(), 5, b.data(), 7, 0.0, c.data(), 7);
    for (double v : c) CHECK(std::isfinite(v));
  }
}

TEST_CASE("SIMD elementwise kernels agree with the scalar reference") {
  const KernelTable* simd = avx2_table();
  if (simd == nullptr) {
    MESSAGE("AVX2 variant unavailable; equivalence test skipped");
    return;
  }
  const KernelTable& ref = scalar_table();
  std::mt19937_64 rng(5);
  for (std::size_t n : {0u, 1u, 3u, 4u, 7u, 8u, 9u, 31u, 1000u}) {
    CAPTURE(n);
    const auto x = random_vec(n, rng);
    const auto y = random_vec(n, rng);

    auto y1 = y, y2 = y;
    ref.axpy(n, 1.3, x.data(), y1.data());
    simd->axpy(n, 1.3, x.data(), y2.data());
    for (std::size_t i = 0; i < n; ++i) CHECK(y1[i] == doctest::Approx(y2[i]).epsilon(1e-14));

    std::vector<double> z1(n), z2(n);
    ref.axpby(n, 0.3, x.data(), -2.0, y.data(), z1.data());
    simd->axpby(n, 0.3, x.data(), -2.0, y.data(), z2.data());
    for (std::size_t i = 0; i < n; ++i) CHECK(z1[i] == doctest::Approx(z2[i]).epsilon(1e-14));

    ref.mul(n, x.data(), y.data(), z1.data());
    simd->mul(n, x.data(), y.data(), z2.data());
    CHECK(z1 == z2);

    CHECK(ref.dot(n, x.data(), y.data()) ==
          doctest::Approx(simd->dot(n, x.data(), y.data())).epsilon(1e-12));
    CHECK(ref.sum(n, x.data()) == doctest::Approx(simd->sum(n, x.data())).epsilon(1e-12));

    ref.leaky_mask(n, x.data(), 0.2, z1.data());
    simd->leaky_mask(n, x.data(), 0.2, z2.data());
    CHECK(z1 == z2);

    auto p1 = x, p2 = x;
    std::vector<double> m1(n, 0.1), m2(n, 0.1), v1(n, 0.2), v2(n, 0.2);
    ref.adam(n, p1.data(), y.data(), m1.data(), v1.data(), 0.0, 0.99, 1e-3, 1e-8);
    simd->adam(n, p2.data(), y.data(), m2.data(), v2.data(), 0.0, 0.99, 1e-3, 1e-8);
    CHECK(p1 == p2);
    CHECK(m1 == m2);
    CHECK(v1 == v2);
  }
}

TEST_CASE("backend selection round-trips") {
  CHECK(select_backend(Backend::Scalar));
  CHECK(active().name == "scalar");
  if (avx2_table() != nullptr) {
    CHECK(select_backend(Backend::Avx2));
    CHECK(active().name == "avx2");
  } else {
    CHECK_FALSE(select_backend(Backend::Avx2));
  }
  if (avx512_table() != nullptr) {
    CHECK(select_backend(Backend::Avx512));
    CHECK(active().name == "avx512");
  } else {
    CHECK_FALSE(select_backend(Backend::Avx512));
  }
}
