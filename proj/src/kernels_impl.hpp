#pragma once

#include <cstddef>

namespace ccu::kernels::detail {

double dot_scalar(const double* a, const double* b, std::size_t n);
double squared_distance_scalar(const double* a, const double* b, std::size_t n);
void squared_distances_scalar(const double* point, const double* rows, std::size_t n_rows,
                              std::size_t dim, double* out);
void gemv_scalar(const double* w, std::size_t rows, std::size_t cols, const double* x,
                 const double* bias, double* out);
void axpy_scalar(double alpha, const double* x, double* y, std::size_t n);

#if defined(CCU_HAVE_AVX2_KERNELS)
double dot_avx2(const double* a, const double* b, std::size_t n);
double squared_distance_avx2(const double* a, const double* b, std::size_t n);
void squared_distances_avx2(const double* point, const double* rows, std::size_t n_rows,
                            std::size_t dim, double* out);
void gemv_avx2(const double* w, std::size_t rows, std::size_t cols, const double* x,
               const double* bias, double* out);
void axpy_avx2(double alpha, const double* x, double* y, std::size_t n);
#endif

}  // namespace ccu::kernels::detail
