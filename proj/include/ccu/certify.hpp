#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "ccu/model.hpp"
#include "ccu/types.hpp"

namespace ccu {

/// "max confidence over {x : d(x, center) <= radius} <= bound".
struct Certificate {
  Vector center;
  double radius = 0.0;
  double bound = 0.0;
  double log_b = 0.0;
  std::optional<double> nu;  // set when produced by certified_radius
  std::uint64_t model_fingerprint = 0;
};

/// Distances from a fixed center to every centroid, so that log b(R) can be
/// re-evaluated cheaply for many radii (bisection).
class BallProfile {
 public:
  BallProfile(const CcuModel& model, const Vector& center);

  /// log b(R): numerator sum_k alpha_k exp(-max(d_k - R, 0)^2 / (2 sigma_k^2)),
  /// denominator sum_l beta_l exp(-(d_l + R)^2 / (2 theta_l^2)).
  double log_b(double radius) const;

 private:
  std::vector<double> in_sq_, in_dist_, in_log_w_, in_var_;
  std::vector<double> out_sq_, out_dist_, out_log_w_, out_var_;
};

double ball_log_b(const CcuModel& model, const Vector& center, double radius);

/// Upper bound on confidence over the ball, (1/M)(1 + M b/lambda)/(1 + b/lambda).
double bound_from_log_b(double log_b, double lambda, std::size_t num_classes);

Certificate ball_bound(const CcuModel& model, const Vector& center, double radius,
                       std::uint64_t model_fingerprint = 0);

struct BisectionOptions {
  int max_iters = 200;
  double rel_tol = 1e-6;    // on b
  double abs_width = 1e-12; // on the radius interval
  double max_radius = 1152921504606846976.0;  // 2^60
};

/// Largest radius whose bound is nu/M, i.e. b(R) = (nu - 1)/(M - nu) * lambda,
/// by bracket expansion and bisection. The returned radius is the lower end of
/// the final bracket so its bound never exceeds nu/M. Throws NoCertificate
/// when b(0) already exceeds the target, InvalidArgument for nu outside (1, M).
Certificate certified_radius(const CcuModel& model, const Vector& center, double nu,
                             std::uint64_t model_fingerprint = 0,
                             const BisectionOptions& options = {});

struct FarFieldCheck {
  double required = 0.0;  // distance to the training set that guarantees the bound
  double actual = 0.0;    // min distance from z to the supplied training points
  bool satisfied = false;
  std::size_t nearest_in_component = 0;   // k*
  std::size_t weakest_out_component = 0;  // l*
  std::size_t nearest_train_point = 0;    // i*
};

/// Distance beyond which every class probability at z is at most (1 + eps)/M.
/// Requires min theta > max sigma. When `train_points` is a subsample the
/// reported `actual` over-estimates the true minimum distance.
FarFieldCheck far_field_required_distance(const CcuModel& model, const Vector& z,
                                         const RowMatrix& train_points, double epsilon);

/// Number of rows x with d(x, center) <= radius.
std::size_t ball_contains_points(const MetricTransform& metric, const Vector& center, double radius,
                                 const RowMatrix& dataset);

struct ConfidenceCensus {
  double min_confidence = 0.0;
  std::size_t below_threshold = 0;  // strictly below
};

ConfidenceCensus low_confidence_census(const CcuModel& model, const RowMatrix& dataset,
                                       double threshold);

}  // namespace ccu
