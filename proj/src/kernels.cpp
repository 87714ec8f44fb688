#include "ccu/kernels.hpp"

#include <cstdlib>
#include <stdexcept>
#include <string>

#include "kernels_impl.hpp"

namespace ccu::kernels {
namespace {

constexpr KernelTable kScalar{Isa::scalar,
                              &detail::dot_scalar,
                              &detail::squared_distance_scalar,
                              &detail::squared_distances_scalar,
                              &detail::gemv_scalar,
                              &detail::axpy_scalar};

#if defined(CCU_HAVE_AVX2_KERNELS)
constexpr KernelTable kAvx2{Isa::avx2,
                            &detail::dot_avx2,
                            &detail::squared_distance_avx2,
                            &detail::squared_distances_avx2,
                            &detail::gemv_avx2,
                            &detail::axpy_avx2};

bool cpu_has_avx2() {
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
}
#endif

const KernelTable* initial_table() {
  if (const char* env = std::getenv("CCU_SIMD")) {
    const std::string choice(env);
    if (choice == "scalar") return &kScalar;
    if (choice == "avx2" && avx2_table()) return avx2_table();
  }
  return best_available() == Isa::avx2 ? avx2_table() : &kScalar;
}

const KernelTable*& current() {
  static const KernelTable* table = initial_table();
  return table;
}

}  // namespace

const KernelTable& scalar_table() { return kScalar; }

const KernelTable* avx2_table() {
#if defined(CCU_HAVE_AVX2_KERNELS)
  static const bool supported = cpu_has_avx2();
  return supported ? &kAvx2 : nullptr;
#else
  return nullptr;
#endif
}

Isa best_available() { return avx2_table() ? Isa::avx2 : Isa::scalar; }

const KernelTable& active() { return *current(); }

void select(Isa isa) {
  if (isa == Isa::scalar) {
    current() = &kScalar;
    return;
  }
  const KernelTable* table = avx2_table();
  if (!table) throw std::runtime_error("AVX2 kernels are not available on this build/CPU");
  current() = table;
}

std::string_view isa_name(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

}  // namespace ccu::kernels
