#include "ccu/certify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "ccu/errors.hpp"
#include "ccu/kernels.hpp"

namespace ccu {

BallProfile::BallProfile(const CcuModel& model, const Vector& center) {
  if (static_cast<std::size_t>(center.size()) != model.dim() || !center.allFinite()) {
    throw InvalidArgument("certify: center has wrong dimension or non-finite entries");
  }
  const Vector z = model.metric().whiten(center);
  auto fill = [&](const GaussianMixture& g, std::vector<double>& sq, std::vector<double>& dist,
                  std::vector<double>& log_w, std::vector<double>& var) {
    const std::size_t k = g.size();
    sq.resize(k);
    dist.resize(k);
    kernels::active().squared_distances(z.data(), g.whitened_centroids().data(), k, g.dim(), sq.data());
    log_w.resize(k);
    var.resize(k);
    for (std::size_t c = 0; c < k; ++c) {
      const auto ci = static_cast<Eigen::Index>(c);
      dist[c] = std::sqrt(sq[c]);
      log_w[c] = g.log_weights()[ci];
      var[c] = g.scales()[ci] * g.scales()[ci];
    }
  };
  fill(model.in_gmm(), in_sq_, in_dist_, in_log_w_, in_var_);
  fill(model.out_gmm(), out_sq_, out_dist_, out_log_w_, out_var_);
}

double BallProfile::log_b(double radius) const {
  if (!(radius >= 0.0)) throw InvalidArgument("certify: radius must be non-negative");
  std::vector<double> terms(in_dist_.size());
  for (std::size_t k = 0; k < in_dist_.size(); ++k) {
    // At R = 0 the squared distances are used as is, so b(0) reproduces the
    // density ratio bit for bit.
    const double gap = std::max(in_dist_[k] - radius, 0.0);
    const double g2 = radius == 0.0 ? in_sq_[k] : gap * gap;
    terms[k] = in_log_w_[k] - g2 / (2.0 * in_var_[k]);
  }
  const double num = log_sum_exp(terms);
  terms.resize(out_dist_.size());
  for (std::size_t l = 0; l < out_dist_.size(); ++l) {
    const double far = out_dist_[l] + radius;
    const double f2 = radius == 0.0 ? out_sq_[l] : far * far;
    terms[l] = out_log_w_[l] - f2 / (2.0 * out_var_[l]);
  }
  return num - log_sum_exp(terms);
}

double ball_log_b(const CcuModel& model, const Vector& center, double radius) {
  if (!(radius >= 0.0)) throw InvalidArgument("certify: radius must be non-negative");
  return BallProfile(model, center).log_b(radius);
}

double bound_from_log_b(double log_b, double lambda, std::size_t num_classes) {
  return calibrate(1.0, log_b - std::log(lambda), num_classes);
}

Certificate ball_bound(const CcuModel& model, const Vector& center, double radius,
                       std::uint64_t model_fingerprint) {
  Certificate cert;
  cert.center = center;
  cert.radius = radius;
  cert.log_b = ball_log_b(model, center, radius);
  cert.bound = bound_from_log_b(cert.log_b, model.lambda(), model.num_classes());
  cert.model_fingerprint = model_fingerprint;
  return cert;
}

Certificate certified_radius(const CcuModel& model, const Vector& center, double nu,
                             std::uint64_t model_fingerprint, const BisectionOptions& options) {
  const double m = static_cast<double>(model.num_classes());
  if (!(nu > 1.0 && nu < m)) {
    throw InvalidArgument("certified_radius: nu must lie in (1, " + std::to_string(model.num_classes()) +
                          "), got " + std::to_string(nu));
  }
  const BallProfile profile(model, center);
  const double log_target = std::log((nu - 1.0) / (m - nu)) + std::log(model.lambda());
  const double log_b0 = profile.log_b(0.0);
  if (log_b0 > log_target) {
    throw NoCertificate("certified_radius: b(0) exceeds the target ratio", log_b0, log_target);
  }

  auto finish = [&](double radius, double log_b) {
    Certificate cert;
    cert.center = center;
    cert.radius = radius;
    cert.log_b = log_b;
    cert.bound = bound_from_log_b(log_b, model.lambda(), model.num_classes());
    cert.nu = nu;
    cert.model_fingerprint = model_fingerprint;
    return cert;
  };
  // Converged when b(lo) is within rel_tol of the target from below.
  auto close_enough = [&](double log_b) { return -std::expm1(log_b - log_target) <= options.rel_tol; };

  if (close_enough(log_b0)) return finish(0.0, log_b0);

  double lo = 0.0, lo_log_b = log_b0;
  double hi = 0.0;
  for (;;) {
    hi = std::max(1.0, 2.0 * hi);
    const double lb = profile.log_b(hi);
    if (lb >= log_target) break;
    lo = hi;
    lo_log_b = lb;
    if (close_enough(lb)) return finish(lo, lo_log_b);
    if (hi >= options.max_radius) return finish(lo, lo_log_b);
  }

  for (int it = 0; it < options.max_iters; ++it) {
    if (hi - lo <= options.abs_width) break;
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    const double lb = profile.log_b(mid);
    if (lb <= log_target) {
      lo = mid;
      lo_log_b = lb;
      if (close_enough(lb)) break;
    } else {
      hi = mid;
    }
  }
  return finish(lo, lo_log_b);
}

FarFieldCheck far_field_required_distance(const CcuModel& model, const Vector& z,
                                         const RowMatrix& train_points, double epsilon) {
  if (train_points.rows() == 0) throw InvalidArgument("far_field: empty training set");
  if (!(epsilon > 0.0)) throw InvalidArgument("far_field: epsilon must be positive");
  const auto& in = model.in_gmm();
  const auto& out = model.out_gmm();
  if (!(out.min_scale() > in.max_scale())) {
    throw InvalidArgument("far_field: requires min out-scale > max in-scale");
  }
  const auto& metric = model.metric();
  const auto& kt = kernels::active();
  const Vector wz = metric.whiten(z);
  const std::size_t d = model.dim();

  FarFieldCheck res;
  std::vector<double> sq_in(in.size());
  kt.squared_distances(wz.data(), in.whitened_centroids().data(), in.size(), d, sq_in.data());
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < in.size(); ++k) {
    const double s = in.scales()[static_cast<Eigen::Index>(k)];
    const double ratio = std::sqrt(sq_in[k]) / s;
    if (ratio < best) {
      best = ratio;
      res.nearest_in_component = k;
    }
  }

  std::vector<double> sq_out(out.size());
  kt.squared_distances(wz.data(), out.whitened_centroids().data(), out.size(), d, sq_out.data());
  best = std::numeric_limits<double>::infinity();
  for (std::size_t l = 0; l < out.size(); ++l) {
    const auto li = static_cast<Eigen::Index>(l);
    const double term = out.log_weights()[li] - sq_out[l] / (2.0 * out.scales()[li] * out.scales()[li]);
    if (term < best) {
      best = term;
      res.weakest_out_component = l;
    }
  }

  const RowMatrix wt = metric.whiten_rows(train_points);
  std::vector<double> sq_train(static_cast<std::size_t>(wt.rows()));
  kt.squared_distances(wz.data(), wt.data(), sq_train.size(), d, sq_train.data());
  const auto nearest = std::min_element(sq_train.begin(), sq_train.end());
  res.nearest_train_point = static_cast<std::size_t>(nearest - sq_train.begin());
  res.actual = std::sqrt(*nearest);

  const auto ks = static_cast<Eigen::Index>(res.nearest_in_component);
  const auto ls = static_cast<Eigen::Index>(res.weakest_out_component);
  const Eigen::RowVectorXd mu = in.whitened_centroids().row(ks);
  const Eigen::RowVectorXd nu = out.whitened_centroids().row(ls);
  const double sigma = in.scales()[ks];
  const double theta = out.scales()[ls];
  const double delta = theta * theta / (sigma * sigma) - 1.0;
  const double train_to_mu = (wt.row(static_cast<Eigen::Index>(res.nearest_train_point)) - mu).norm();
  const double mu_to_nu = (mu - nu).norm();

  const double m = static_cast<double>(model.num_classes());
  const std::vector<double> log_alpha(in.log_weights().data(),
                                      in.log_weights().data() + in.log_weights().size());
  const double log_arg = std::log(m - 1.0) - std::log(epsilon) - std::log(model.lambda()) +
                         log_sum_exp(log_alpha) - out.log_weights()[ls];
  // The square root of the log term carries a factor sqrt(2/delta): the
  // quadratic's leading coefficient is delta / (2 theta^2).
  const double tail = log_arg > 0.0 ? theta * std::sqrt(2.0 * log_arg / delta) : 0.0;
  res.required = train_to_mu + mu_to_nu * (2.0 / delta + 1.0 / std::sqrt(delta)) + tail;
  res.satisfied = res.actual >= res.required;
  return res;
}

std::size_t ball_contains_points(const MetricTransform& metric, const Vector& center, double radius,
                                 const RowMatrix& dataset) {
  if (static_cast<std::size_t>(dataset.cols()) != metric.dim() && dataset.rows() > 0) {
    throw InvalidArgument("ball_contains_points: dataset dimension mismatch");
  }
  if (dataset.rows() == 0) return 0;
  const Vector wc = metric.whiten(center);
  const RowMatrix wd = metric.whiten_rows(dataset);
  std::vector<double> sq(static_cast<std::size_t>(wd.rows()));
  kernels::active().squared_distances(wc.data(), wd.data(), sq.size(), metric.dim(), sq.data());
  const double r2 = radius * radius;
  return static_cast<std::size_t>(std::count_if(sq.begin(), sq.end(), [&](double v) { return v <= r2; }));
}

ConfidenceCensus low_confidence_census(const CcuModel& model, const RowMatrix& dataset,
                                       double threshold) {
  if (dataset.rows() == 0) throw InvalidArgument("low_confidence_census: empty dataset");
  ConfidenceCensus census;
  census.min_confidence = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < dataset.rows(); ++i) {
    const double c = model.confidence(dataset.row(i).transpose());
    census.min_confidence = std::min(census.min_confidence, c);
    if (c < threshold) ++census.below_threshold;
  }
  return census;
}

}  // namespace ccu
