#include "kernels_impl.hpp"

namespace ccu::kernels::detail {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

double squared_distance_scalar(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double diff = a[i] - b[i];
    acc += diff * diff;
  }
  return acc;
}

void squared_distances_scalar(const double* point, const double* rows, std::size_t n_rows,
                              std::size_t dim, double* out) {
  for (std::size_t r = 0; r < n_rows; ++r) {
    out[r] = squared_distance_scalar(point, rows + r * dim, dim);
  }
}

void gemv_scalar(const double* w, std::size_t rows, std::size_t cols, const double* x,
                 const double* bias, double* out) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double acc = dot_scalar(w + r * cols, x, cols);
    out[r] = bias ? acc + bias[r] : acc;
  }
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace ccu::kernels::detail
