#pragma once

// Data-parallel inner loops shared by the metric, density, classifier and
// certification code. Every kernel has a scalar reference implementation; an
// AVX2/FMA variant is compiled separately and picked at runtime when the CPU
// supports it. Results of the two variants agree to rounding (summation order
// differs), which the kernel equivalence tests pin down.

#include <cstddef>
#include <span>
#include <string_view>

namespace ccu::kernels {

enum class Isa { scalar, avx2 };

struct KernelTable {
  Isa isa;
  double (*dot)(const double* a, const double* b, std::size_t n);
  double (*squared_distance)(const double* a, const double* b, std::size_t n);
  // out[r] = ||point - rows[r]||^2 for a row-major block of n_rows x dim.
  void (*squared_distances)(const double* point, const double* rows, std::size_t n_rows,
                            std::size_t dim, double* out);
  // out = W x + bias, W row-major rows x cols. bias may be null.
  void (*gemv)(const double* w, std::size_t rows, std::size_t cols, const double* x,
               const double* bias, double* out);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
};

const KernelTable& scalar_table();

// Null when the AVX2 variant was not compiled in or the CPU lacks AVX2+FMA.
const KernelTable* avx2_table();

Isa best_available();

// The table used by the library. Chosen once from best_available(), unless the
// CCU_SIMD environment variable is set to "scalar" or "avx2".
const KernelTable& active();

// Switches the active table. Not synchronized; meant for tests and benchmarks.
void select(Isa isa);

std::string_view isa_name(Isa isa);

inline double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot(a.data(), b.data(), a.size());
}

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  return active().squared_distance(a.data(), b.data(), a.size());
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  active().axpy(alpha, x.data(), y.data(), x.size());
}

}  // namespace ccu::kernels
