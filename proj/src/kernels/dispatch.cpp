// SPDX-License-Identifier: Apache-2.0
#include <atomic>
#include <cstdlib>
#include <string_view>

#include "scenediff/kernels/kernels.hpp"

namespace scenediff::kernels {
namespace {

const KernelTable kScalar{Isa::kScalar, "scalar", &scalar::gemm_acc, &scalar::axpy, &scalar::add,
                          &scalar::mul};
#if defined(SCENEDIFF_HAVE_AVX2)
const KernelTable kAvx2{Isa::kAvx2, "avx2", &avx2::gemm_acc, &avx2::axpy, &avx2::add, &avx2::mul};
#endif

const KernelTable* pick_default() {
  const char* env = std::getenv("SCENEDIFF_KERNELS");
  if (env != nullptr && std::string_view(env) == "scalar") return &kScalar;
  if (const KernelTable* t = avx2_table()) return t;
  return &kScalar;
}

std::atomic<const KernelTable*>& slot() {
  static std::atomic<const KernelTable*> s{pick_default()};
  return s;
}

}  // namespace

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
  return __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}

const KernelTable& scalar_table() { return kScalar; }

const KernelTable* avx2_table() {
#if defined(SCENEDIFF_HAVE_AVX2)
  return cpu_has_avx2() ? &kAvx2 : nullptr;
#else
  return nullptr;
#endif
}

const KernelTable& active() { return *slot().load(std::memory_order_relaxed); }

void set_active(Isa isa) {
  if (isa == Isa::kAvx2) {
    if (const KernelTable* t = avx2_table()) {
      slot().store(t);
      return;
    }
  }
  slot().store(&kScalar);
}

}  // namespace scenediff::kernels
