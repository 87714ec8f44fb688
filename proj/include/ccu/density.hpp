#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "ccu/metric.hpp"
#include "ccu/types.hpp"

namespace ccu {

/// Gradient of log p(x) for one mixture.
struct MixtureGradient {
  double value = 0.0;   // log p(x)
  RowMatrix centroids;  // d/d mu_k, original coordinates, K x d
  Vector log_scales;    // d/d log sigma_k
  Vector x;             // d/dx
};

/// Isotropic Gaussian mixture under a shared metric with uniform mixing:
///
///   p(x) = sum_k w_k exp(-d(x, mu_k)^2 / (2 sigma_k^2)),
///   log w_k = -log K - (d/2) log(2 pi sigma_k^2) - (1/2) log det C.
///
/// Centroids are kept in original coordinates; a whitened copy is cached so
/// that evaluation is a batch of Euclidean squared distances. Scales are in
/// whitened units. Log weights are recomputed whenever the scales change.
class GaussianMixture {
 public:
  GaussianMixture(std::shared_ptr<const MetricTransform> metric, RowMatrix centroids,
                  Vector scales);

  std::size_t size() const { return static_cast<std::size_t>(centroids_.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(centroids_.cols()); }

  const MetricTransform& metric() const { return *metric_; }
  const std::shared_ptr<const MetricTransform>& metric_ptr() const { return metric_; }

  const RowMatrix& centroids() const { return centroids_; }
  const RowMatrix& whitened_centroids() const { return whitened_centroids_; }
  const Vector& scales() const { return scales_; }
  Vector log_scales() const { return scales_.array().log().matrix(); }
  const Vector& log_weights() const { return log_weights_; }

  void set_centroids(RowMatrix centroids);
  void set_scales(Vector scales);
  void set_log_scales(const Vector& log_scales);

  double max_scale() const { return scales_.maxCoeff(); }
  double min_scale() const { return scales_.minCoeff(); }

  /// log p(x) via log-sum-exp. Throws on non-finite x or dimension mismatch.
  double log_density(const Vector& x) const;

  /// Same, for a point already in whitened coordinates.
  double log_density_whitened(std::span<const double> z) const;

  /// Per-component log terms log w_k - ||z - m_k||^2 / (2 sigma_k^2); also
  /// returns the squared whitened distances through `sq_dist` when non-empty.
  void component_log_terms(std::span<const double> z, std::span<double> terms,
                           std::span<double> sq_dist = {}) const;

  /// Analytic gradient of log p(x) w.r.t. centroids, log scales and x.
  MixtureGradient log_density_grad(const Vector& x) const;

  /// Gradient of log p w.r.t. the whitened point only (cheap path used by the
  /// attack). Returns log p.
  double log_density_and_whitened_grad(std::span<const double> z, std::span<double> grad_z) const;

 private:
  void refresh_whitened();
  void refresh_weights();

  std::shared_ptr<const MetricTransform> metric_;
  RowMatrix centroids_;
  RowMatrix whitened_centroids_;
  Vector scales_;
  Vector log_weights_;
};

struct EmOptions {
  int max_iters = 100;
  double rel_tol = 1e-6;       // stop on relative log-likelihood change below this
  double scale_floor = 1e-3;   // whitened units
  std::size_t max_points = 0;  // subsample without replacement above this many points (0 = all)
  std::uint64_t seed = 0;
};

/// Per-iteration record of an EM run.
struct EmTrace {
  std::vector<double> log_likelihood;  // mean per-point, after each iteration
  std::vector<bool> intervened;        // a floor or reseed fired in that iteration
  std::size_t floor_events = 0;
  std::size_t reseed_events = 0;
};

/// Fits K spherical components with fixed uniform mixing by EM in whitened
/// coordinates. Seeding is k-means++ (D^2 sampling). Throws on empty data or
/// K larger than the number of points.
GaussianMixture em_init(const RowMatrix& data, std::size_t k,
                        std::shared_ptr<const MetricTransform> metric, const EmOptions& options,
                        EmTrace* trace = nullptr);

/// theta_l <- max(theta_l, 2 max_k sigma_k).
void project_scale_constraint(const GaussianMixture& in, GaussianMixture& out);

/// log(sum exp(values)), -inf for an empty span.
double log_sum_exp(std::span<const double> values);

}  // namespace ccu
