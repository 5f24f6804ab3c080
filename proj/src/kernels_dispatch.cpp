#include "lagds/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <string_view>

namespace lagds::kernels {

#if defined(LAGDS_HAVE_AVX2)
const KernelTable& avx2_table_unchecked();
#endif
#if defined(LAGDS_HAVE_AVX512)
const KernelTable& avx512_table_unchecked();
#endif

namespace {

bool cpu_has_avx2() {
#if defined(LAGDS_HAVE_AVX2) && (defined(__x86_64__) || defined(__i386__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

bool cpu_has_avx512() {
#if defined(LAGDS_HAVE_AVX512) && (defined(__x86_64__) || defined(__i386__))
  __builtin_cpu_init();
  return cpu_has_avx2() && __builtin_cpu_supports("avx512f");
#else
  return false;
#endif
}

const KernelTable* initial_table() {
  if (const char* env = std::getenv("LAGDS_KERNELS")) {
    const std::string_view want(env);
    if (want == "scalar") return &scalar_table();
    if (want == "avx2" && avx2_table() != nullptr) return avx2_table();
    if (want == "avx512" && avx512_table() != nullptr) return avx512_table();
  }
  if (avx512_table() != nullptr) return avx512_table();
  if (avx2_table() != nullptr) return avx2_table();
  return &scalar_table();
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> table{initial_table()};
  return table;
}

}  // namespace

const KernelTable* avx2_table() {
#if defined(LAGDS_HAVE_AVX2)
  static const bool ok = cpu_has_avx2();
  return ok ? &avx2_table_unchecked() : nullptr;
#else
  return nullptr;
#endif
}

const KernelTable* avx512_table() {
#if defined(LAGDS_HAVE_AVX512)
  static const bool ok = cpu_has_avx512();
  return ok ? &avx512_table_unchecked() : nullptr;
#else
  return nullptr;
#endif
}

const KernelTable& active() { return *current().load(std::memory_order_acquire); }

bool select_backend(Backend b) {
  const KernelTable* t = b == Backend::Scalar ? &scalar_table()
                         : b == Backend::Avx2 ? avx2_table()
                                              : avx512_table();
  if (t == nullptr) return false;
  current().store(t, std::memory_order_release);
  return true;
}

}  // namespace lagds::kernels
