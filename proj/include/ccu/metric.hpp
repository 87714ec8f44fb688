#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

#include "ccu/types.hpp"

namespace ccu {

/// Data-adapted metric d(x, y) = ||C^{-1/2} (x - y)||_2.
///
/// C is held as its eigendecomposition U diag(lambda) U^T with the eigenvalues
/// floored relative to the largest one. Whitening maps x to
/// diag(lambda)^{-1/2} U^T x, the coordinates in which d is Euclidean; the
/// density, certification and attack code all work in those coordinates.
///
/// Immutable after construction.
class MetricTransform {
 public:
  /// Takes ownership of an orthonormal basis (columns) and positive eigenvalues.
  /// Validates orthonormality to 1e-10 and positivity.
  MetricTransform(Matrix eigenvectors, Vector eigenvalues);

  static MetricTransform identity(std::size_t dim);

  /// Builds the floored metric from an explicit covariance matrix.
  static MetricTransform from_covariance(const Matrix& covariance, double floor_ratio = 1e-6);

  std::size_t dim() const { return static_cast<std::size_t>(eigenvalues_.size()); }
  const Matrix& eigenvectors() const { return eigenvectors_; }
  const Vector& eigenvalues() const { return eigenvalues_; }
  double log_det() const { return log_det_; }

  double distance(const Vector& x, const Vector& y) const;

  Vector whiten(const Vector& x) const;
  Vector unwhiten(const Vector& z) const;
  void whiten_into(std::span<const double> x, std::span<double> z) const;
  void unwhiten_into(std::span<const double> z, std::span<double> x) const;

  // Chain rule through whitening: given dF/dz returns dF/dx = W^T dF/dz.
  Vector pull_back(const Vector& grad_z) const;
  // Gradient w.r.t. whitened coordinates of a function of x: dF/dz = W^{-T} dF/dx.
  Vector push_forward_gradient(const Vector& grad_x) const;

  RowMatrix whiten_rows(const RowMatrix& points) const;

  // Row-major whitening matrix diag(lambda)^{-1/2} U^T.
  const RowMatrix& whitening_matrix() const { return whiten_; }

  std::uint64_t fingerprint() const;

 private:
  void check_dim(std::size_t n, const char* what) const;

  Matrix eigenvectors_;
  Vector eigenvalues_;
  RowMatrix whiten_;
  RowMatrix unwhiten_;
  double log_det_ = 0.0;
};

/// Empirical covariance (mean subtracted, 1/(n-1)) of the rows of `samples`,
/// eigendecomposed with eigenvalues floored at floor_ratio * max eigenvalue.
/// Throws InvalidArgument on fewer than 2 samples, non-finite entries, or an
/// all-zero covariance.
MetricTransform fit_covariance(const RowMatrix& samples, double floor_ratio = 1e-6);

}  // namespace ccu
