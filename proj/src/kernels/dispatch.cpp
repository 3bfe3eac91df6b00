// SPDX-License-Identifier: Apache-2.0
#include <atomic>
#include <cstdlib>
#include <string_view>

#include "ftlab/kernels/kernels.hpp"

namespace ftlab::kernels {
namespace {

const KernelTable& pick() {
  if (const char* env = std::getenv("FTLAB_KERNELS"); env && std::string_view(env) == "scalar") {
    return scalar_table();
  }
#if defined(FTLAB_HAVE_AVX2)
  if (cpu_has_avx2()) return avx2_table();
#endif
  return scalar_table();
}

std::atomic<const KernelTable*>& slot() {
  static std::atomic<const KernelTable*> current{&pick()};
  return current;
}

}  // namespace

bool cpu_has_avx2() {
#if defined(__x86_64__) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable& active() { return *slot().load(std::memory_order_acquire); }

const KernelTable& set_active(const KernelTable& table) {
  return *slot().exchange(&table, std::memory_order_acq_rel);
}

}  // namespace ftlab::kernels
