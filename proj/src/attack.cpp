#include "ccu/attack.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "ccu/errors.hpp"

namespace ccu {
namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

void clip_unit(Vector& x) { x = x.cwiseMax(0.0).cwiseMin(1.0); }

// Shrinks the whitened offset u onto the ball of radius R.
void project_offset(Vector& u, double radius) {
  const double n = u.norm();
  if (n > radius) u *= radius / n;
}

}  // namespace

void AttackConfig::validate() const {
  if (steps < 1) throw InvalidArgument("attack: steps must be >= 1");
  if (restarts < 1) throw InvalidArgument("attack: restarts must be >= 1");
  if (!(grow > 1.0)) throw InvalidArgument("attack: grow must be > 1");
  if (!(shrink > 1.0)) throw InvalidArgument("attack: shrink must be > 1");
  if (!(initial_step > 0.0)) throw InvalidArgument("attack: initial_step must be positive");
  if (final_altproj_steps < 0) throw InvalidArgument("attack: final_altproj_steps must be >= 0");
}

double feasibility_residual(const Vector& x, const MetricTransform& metric, const Vector& x0,
                            double radius, bool box) {
  double res = std::max(metric.distance(x, x0) - radius, 0.0);
  if (box) {
    for (Eigen::Index j = 0; j < x.size(); ++j) {
      res = std::max({res, -x[j], x[j] - 1.0});
    }
  }
  return res;
}

ProjectionResult alternating_projection(const Vector& x, const MetricTransform& metric,
                                        const Vector& x0, double radius, bool box, int steps) {
  if (steps < 1) throw InvalidArgument("alternating_projection: steps must be >= 1");
  if (!(radius >= 0.0)) throw InvalidArgument("alternating_projection: radius must be >= 0");
  ProjectionResult out;
  out.point = x;
  if (feasibility_residual(x, metric, x0, radius, box) == 0.0) return out;
  for (int s = 0; s < steps; ++s) {
    Vector u = metric.whiten(out.point - x0);
    project_offset(u, radius);
    out.point = x0 + metric.unwhiten(u);
    if (!box) break;
    clip_unit(out.point);
  }
  out.residual = feasibility_residual(out.point, metric, x0, radius, box);
  return out;
}

AttackResult pgd_max_confidence(const CcuModel& model, const Vector& x0, double radius, bool box,
                                const AttackConfig& config) {
  config.validate();
  if (!(radius > 0.0) || !std::isfinite(radius)) throw InvalidArgument("attack: radius must be positive");
  if (static_cast<std::size_t>(x0.size()) != model.dim() || !x0.allFinite()) {
    throw InvalidArgument("attack: seed has wrong dimension or non-finite entries");
  }
  if (box && (x0.minCoeff() < 0.0 || x0.maxCoeff() > 1.0)) {
    throw InvalidArgument("attack: seed lies outside the unit box");
  }
  const MetricTransform& metric = model.metric();
  const auto d = static_cast<Eigen::Index>(model.dim());

  AttackResult result;
  result.best_point = x0;
  result.best_confidence = model.confidence(x0);
  result.per_restart_best.reserve(static_cast<std::size_t>(config.restarts));

  for (int restart = 0; restart < config.restarts; ++restart) {
    std::mt19937_64 rng(splitmix(config.seed ^ splitmix(static_cast<std::uint64_t>(restart) + 1)));
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> unif;

    Vector u(d);
    for (Eigen::Index j = 0; j < d; ++j) u[j] = normal(rng);
    const double un = u.norm();
    const double len = radius * std::pow(unif(rng), 1.0 / static_cast<double>(d));
    u = un > 0.0 ? Vector(u * (len / un)) : Vector::Zero(d);

    Vector x = x0 + metric.unwhiten(u);
    if (box) clip_unit(x);
    ConfidenceGradient cur = model.confidence_with_grad(x);
    Vector best_x = x;
    double best_c = cur.confidence;
    double step = config.initial_step;

    for (int it = 0; it < config.steps; ++it) {
      Vector g = metric.push_forward_gradient(cur.x);
      const double gn = g.norm();
      if (!(gn > 0.0) || !std::isfinite(gn)) break;
      Vector un_next = metric.whiten(x - x0) + (step / gn) * g;
      project_offset(un_next, radius);
      Vector x_next = x0 + metric.unwhiten(un_next);
      if (box) clip_unit(x_next);
      ConfidenceGradient next = model.confidence_with_grad(x_next);
      if (next.confidence > cur.confidence) {
        x = std::move(x_next);
        cur = std::move(next);
        step *= config.grow;
        if (cur.confidence > best_c) {
          best_c = cur.confidence;
          best_x = x;
        }
      } else {
        step /= config.shrink;
      }
    }

    // Repair: alternating projection, then a radial pull toward x0. Both x0
    // and the box-projected point lie in the box, so the pull stays inside it.
    Vector final_x = best_x;
    if (config.final_altproj_steps > 0) {
      final_x = alternating_projection(best_x, metric, x0, radius, box, config.final_altproj_steps).point;
    }
    Vector off = metric.whiten(final_x - x0);
    const double on = off.norm();
    if (on > radius) final_x = x0 + (radius / on) * (final_x - x0);

    const double c = model.confidence(final_x);
    result.per_restart_best.push_back(c);
    if (c > result.best_confidence) {
      result.best_confidence = c;
      result.best_point = final_x;
    }
  }
  result.feasibility_residual = feasibility_residual(result.best_point, metric, x0, radius, box);
  return result;
}

}  // namespace ccu
