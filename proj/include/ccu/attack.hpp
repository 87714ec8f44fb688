#pragma once

#include <cstdint>
#include <vector>

#include "ccu/metric.hpp"
#include "ccu/model.hpp"
#include "ccu/types.hpp"

namespace ccu {

struct AttackConfig {
  int steps = 500;
  int restarts = 50;
  double initial_step = 3.0;  // length of the unit-gradient step in whitened coordinates
  double grow = 1.1;
  double shrink = 2.0;
  int final_altproj_steps = 10;
  std::uint64_t seed = 0;

  void validate() const;
};

struct AttackResult {
  Vector best_point;
  double best_confidence = 0.0;
  std::vector<double> per_restart_best;
  double feasibility_residual = 0.0;
};

/// Maximizes confidence over {x : d(x, x0) <= R}, intersected with [0,1]^d when
/// `box` is set. Restarts draw from independent streams derived from
/// (seed, restart), so results do not depend on how restarts are scheduled.
AttackResult pgd_max_confidence(const CcuModel& model, const Vector& x0, double radius, bool box,
                                const AttackConfig& config);

struct ProjectionResult {
  Vector point;
  double residual = 0.0;
};

/// `steps` rounds of (ball projection, box clip). Without `box` only the ball
/// projection runs.
ProjectionResult alternating_projection(const Vector& x, const MetricTransform& metric,
                                        const Vector& x0, double radius, bool box, int steps);

/// max(d(x, x0) - R, 0) combined (max) with the largest box violation.
double feasibility_residual(const Vector& x, const MetricTransform& metric, const Vector& x0,
                            double radius, bool box);

}  // namespace ccu
