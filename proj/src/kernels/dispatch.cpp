#include <cstdlib>
#include <cstring>

#include "obnc/kernels.hpp"

namespace obnc::kernels {

#ifdef OBNC_HAVE_AVX2
const KernelTable& avx2_table_unchecked();
#endif

const KernelTable* avx2_table() {
#ifdef OBNC_HAVE_AVX2
  static const bool supported = [] {
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  }();
  if (supported) return &avx2_table_unchecked();
#endif
  return nullptr;
}

const KernelTable& active() {
  static const KernelTable& table = []() -> const KernelTable& {
    const char* env = std::getenv("OBNC_KERNELS");
    if (env != nullptr && std::strcmp(env, "scalar") == 0) return scalar_table();
    if (const KernelTable* simd = avx2_table()) return *simd;
    return scalar_table();
  }();
  return table;
}

std::string_view active_name() { return active().name; }

}  // namespace obnc::kernels
