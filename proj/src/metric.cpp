#include "ccu/metric.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <string>

#include "ccu/errors.hpp"
#include "ccu/kernels.hpp"
#include "hash.hpp"

namespace ccu {

MetricTransform::MetricTransform(Matrix eigenvectors, Vector eigenvalues)
    : eigenvectors_(std::move(eigenvectors)), eigenvalues_(std::move(eigenvalues)) {
  const auto d = eigenvalues_.size();
  if (d == 0) throw InvalidArgument("metric: dimension must be positive");
  if (eigenvectors_.rows() != d || eigenvectors_.cols() != d) {
    throw InvalidArgument("metric: eigenvector matrix must be " + std::to_string(d) + "x" +
                          std::to_string(d));
  }
  if (!eigenvectors_.allFinite() || !eigenvalues_.allFinite()) {
    throw InvalidArgument("metric: non-finite eigen data");
  }
  if ((eigenvalues_.array() <= 0.0).any()) {
    throw InvalidArgument("metric: eigenvalues must be positive");
  }
  const double ortho_err =
      (eigenvectors_.transpose() * eigenvectors_ - Matrix::Identity(d, d)).cwiseAbs().maxCoeff();
  if (ortho_err > 1e-10) {
    throw InvalidArgument("metric: eigenvectors are not orthonormal (error " +
                          std::to_string(ortho_err) + ")");
  }
  const Vector inv_sqrt = eigenvalues_.cwiseSqrt().cwiseInverse();
  whiten_ = inv_sqrt.asDiagonal() * eigenvectors_.transpose();
  unwhiten_ = eigenvectors_ * eigenvalues_.cwiseSqrt().asDiagonal();
  log_det_ = eigenvalues_.array().log().sum();
}

MetricTransform MetricTransform::identity(std::size_t dim) {
  const auto d = static_cast<Eigen::Index>(dim);
  return MetricTransform(Matrix::Identity(d, d), Vector::Ones(d));
}

MetricTransform MetricTransform::from_covariance(const Matrix& covariance, double floor_ratio) {
  if (!(floor_ratio > 0.0 && floor_ratio < 1.0)) {
    throw InvalidArgument("metric: floor_ratio must lie in (0, 1)");
  }
  if (covariance.rows() != covariance.cols() || covariance.rows() == 0) {
    throw InvalidArgument("metric: covariance must be square and non-empty");
  }
  if (!covariance.allFinite()) throw InvalidArgument("metric: non-finite covariance");
  const Matrix sym = 0.5 * (covariance + covariance.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> solver(sym);
  if (solver.info() != Eigen::Success) throw InvalidArgument("metric: eigensolver failed");
  Vector values = solver.eigenvalues();
  const double top = values.maxCoeff();
  if (!(top > 0.0)) {
    throw InvalidArgument("metric: covariance is zero (identical samples); floor undefined");
  }
  const double floor = floor_ratio * top;
  for (auto& v : values) v = std::max(v, floor);
  return MetricTransform(solver.eigenvectors(), std::move(values));
}

void MetricTransform::check_dim(std::size_t n, const char* what) const {
  if (n != dim()) {
    throw InvalidArgument(std::string("metric: ") + what + " has dimension " + std::to_string(n) +
                          ", expected " + std::to_string(dim()));
  }
}

double MetricTransform::distance(const Vector& x, const Vector& y) const {
  check_dim(static_cast<std::size_t>(x.size()), "x");
  check_dim(static_cast<std::size_t>(y.size()), "y");
  const Vector diff = x - y;
  return std::sqrt((whiten_ * diff).squaredNorm());
}

Vector MetricTransform::whiten(const Vector& x) const {
  Vector z(x.size());
  whiten_into(as_span(x), as_span(z));
  return z;
}

Vector MetricTransform::unwhiten(const Vector& z) const {
  Vector x(z.size());
  unwhiten_into(as_span(z), as_span(x));
  return x;
}

void MetricTransform::whiten_into(std::span<const double> x, std::span<double> z) const {
  check_dim(x.size(), "x");
  check_dim(z.size(), "output");
  kernels::active().gemv(whiten_.data(), dim(), dim(), x.data(), nullptr, z.data());
}

void MetricTransform::unwhiten_into(std::span<const double> z, std::span<double> x) const {
  check_dim(z.size(), "z");
  check_dim(x.size(), "output");
  kernels::active().gemv(unwhiten_.data(), dim(), dim(), z.data(), nullptr, x.data());
}

Vector MetricTransform::pull_back(const Vector& grad_z) const {
  check_dim(static_cast<std::size_t>(grad_z.size()), "gradient");
  return whiten_.transpose() * grad_z;
}

Vector MetricTransform::push_forward_gradient(const Vector& grad_x) const {
  check_dim(static_cast<std::size_t>(grad_x.size()), "gradient");
  // x = x0 + unwhiten(z) so dF/dz = unwhiten^T dF/dx.
  return unwhiten_.transpose() * grad_x;
}

RowMatrix MetricTransform::whiten_rows(const RowMatrix& points) const {
  check_dim(static_cast<std::size_t>(points.cols()), "points");
  RowMatrix out(points.rows(), points.cols());
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    kernels::active().gemv(whiten_.data(), dim(), dim(), points.row(i).data(), nullptr,
                           out.row(i).data());
  }
  return out;
}

std::uint64_t MetricTransform::fingerprint() const {
  detail::Fnv1a hash;
  hash.add_doubles(eigenvalues_.data(), static_cast<std::size_t>(eigenvalues_.size()));
  hash.add_doubles(eigenvectors_.data(), static_cast<std::size_t>(eigenvectors_.size()));
  return hash.value();
}

MetricTransform fit_covariance(const RowMatrix& samples, double floor_ratio) {
  if (samples.rows() < 2) throw InvalidArgument("fit_covariance: need at least 2 samples");
  if (samples.cols() == 0) throw InvalidArgument("fit_covariance: zero-dimensional samples");
  if (!samples.allFinite()) throw InvalidArgument("fit_covariance: non-finite sample entries");
  const Eigen::RowVectorXd mean = samples.colwise().mean();
  const RowMatrix centered = samples.rowwise() - mean;
  const Matrix cov =
      (centered.transpose() * centered) / static_cast<double>(samples.rows() - 1);
  return MetricTransform::from_covariance(cov, floor_ratio);
}

}  // namespace ccu
