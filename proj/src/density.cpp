#include "ccu/density.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <string>

#include "ccu/errors.hpp"
#include "ccu/kernels.hpp"

namespace ccu {

double log_sum_exp(std::span<const double> values) {
  if (values.empty()) return -std::numeric_limits<double>::infinity();
  const double top = *std::max_element(values.begin(), values.end());
  if (!std::isfinite(top)) return top;
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - top);
  return top + std::log(acc);
}

GaussianMixture::GaussianMixture(std::shared_ptr<const MetricTransform> metric,
                                 RowMatrix centroids, Vector scales)
    : metric_(std::move(metric)) {
  if (!metric_) throw InvalidArgument("gmm: metric is null");
  if (centroids.rows() == 0) throw InvalidArgument("gmm: need at least one component");
  if (static_cast<std::size_t>(centroids.cols()) != metric_->dim()) {
    throw InvalidArgument("gmm: centroid dimension does not match metric");
  }
  if (scales.size() != centroids.rows()) {
    throw InvalidArgument("gmm: scale count does not match centroid count");
  }
  centroids_ = std::move(centroids);
  refresh_whitened();
  set_scales(std::move(scales));
}

void GaussianMixture::set_centroids(RowMatrix centroids) {
  if (centroids.rows() != centroids_.rows() || centroids.cols() != centroids_.cols()) {
    throw InvalidArgument("gmm: set_centroids shape mismatch");
  }
  if (!centroids.allFinite()) throw InvalidArgument("gmm: non-finite centroid");
  centroids_ = std::move(centroids);
  refresh_whitened();
}

void GaussianMixture::set_scales(Vector scales) {
  if (scales.size() != centroids_.rows()) throw InvalidArgument("gmm: set_scales size mismatch");
  for (double s : scales) {
    if (!(s > 0.0) || !std::isfinite(s)) throw InvalidArgument("gmm: scales must be positive");
  }
  scales_ = std::move(scales);
  refresh_weights();
}

void GaussianMixture::set_log_scales(const Vector& log_scales) {
  set_scales(log_scales.array().exp().matrix());
}

void GaussianMixture::refresh_whitened() {
  whitened_centroids_ = metric_->whiten_rows(centroids_);
}

void GaussianMixture::refresh_weights() {
  const double d = static_cast<double>(dim());
  const double log_k = std::log(static_cast<double>(size()));
  const double log_two_pi = std::log(2.0 * std::numbers::pi);
  log_weights_.resize(scales_.size());
  for (Eigen::Index k = 0; k < scales_.size(); ++k) {
    const double log_var = 2.0 * std::log(scales_[k]);
    log_weights_[k] = -log_k - 0.5 * d * (log_two_pi + log_var) - 0.5 * metric_->log_det();
  }
}

void GaussianMixture::component_log_terms(std::span<const double> z, std::span<double> terms,
                                          std::span<double> sq_dist) const {
  const std::size_t k = size();
  if (z.size() != dim() || terms.size() != k) throw InvalidArgument("gmm: term buffer mismatch");
  double* sq = terms.data();
  if (!sq_dist.empty()) {
    if (sq_dist.size() != k) throw InvalidArgument("gmm: distance buffer mismatch");
    sq = sq_dist.data();
  }
  kernels::active().squared_distances(z.data(), whitened_centroids_.data(), k, dim(), sq);
  for (std::size_t c = 0; c < k; ++c) {
    const double s = scales_[static_cast<Eigen::Index>(c)];
    terms[c] = log_weights_[static_cast<Eigen::Index>(c)] - sq[c] / (2.0 * s * s);
  }
}

double GaussianMixture::log_density_whitened(std::span<const double> z) const {
  std::vector<double> terms(size());
  component_log_terms(z, terms);
  return log_sum_exp(terms);
}

double GaussianMixture::log_density(const Vector& x) const {
  if (static_cast<std::size_t>(x.size()) != dim()) throw InvalidArgument("gmm: dimension mismatch");
  if (!x.allFinite()) throw InvalidArgument("gmm: non-finite input");
  const Vector z = metric_->whiten(x);
  return log_density_whitened(as_span(z));
}

double GaussianMixture::log_density_and_whitened_grad(std::span<const double> z,
                                                      std::span<double> grad_z) const {
  const std::size_t k = size();
  const std::size_t d = dim();
  std::vector<double> terms(k);
  component_log_terms(z, terms);
  const double lse = log_sum_exp(terms);
  std::fill(grad_z.begin(), grad_z.end(), 0.0);
  std::vector<double> diff(d);
  for (std::size_t c = 0; c < k; ++c) {
    const double resp = std::exp(terms[c] - lse);
    if (resp == 0.0) continue;
    const double s = scales_[static_cast<Eigen::Index>(c)];
    const double* m = whitened_centroids_.row(static_cast<Eigen::Index>(c)).data();
    // resp * (m - z) / s^2
    for (std::size_t j = 0; j < d; ++j) diff[j] = m[j] - z[j];
    kernels::active().axpy(resp / (s * s), diff.data(), grad_z.data(), d);
  }
  return lse;
}

MixtureGradient GaussianMixture::log_density_grad(const Vector& x) const {
  if (static_cast<std::size_t>(x.size()) != dim()) throw InvalidArgument("gmm: dimension mismatch");
  if (!x.allFinite()) throw InvalidArgument("gmm: non-finite input");
  const std::size_t k = size();
  const double d = static_cast<double>(dim());
  const Vector z = metric_->whiten(x);
  std::vector<double> terms(k), sq(k);
  component_log_terms(as_span(z), terms, sq);
  const double lse = log_sum_exp(terms);

  MixtureGradient g;
  g.value = lse;
  g.centroids = RowMatrix::Zero(centroids_.rows(), centroids_.cols());
  g.log_scales = Vector::Zero(static_cast<Eigen::Index>(k));
  Vector grad_z = Vector::Zero(z.size());
  for (std::size_t c = 0; c < k; ++c) {
    const auto ci = static_cast<Eigen::Index>(c);
    const double resp = std::exp(terms[c] - lse);
    const double var = scales_[ci] * scales_[ci];
    const Vector toward_point = z - whitened_centroids_.row(ci).transpose();
    // d/dz of -||z - m||^2 / (2 var) is -(z - m) / var; d/dm is the negation.
    grad_z -= (resp / var) * toward_point;
    g.centroids.row(ci) = (metric_->pull_back((resp / var) * toward_point)).transpose();
    g.log_scales[ci] = resp * (sq[c] / var - d);
  }
  g.x = metric_->pull_back(grad_z);
  return g;
}

namespace {

std::vector<std::size_t> kmeanspp_seeds(const RowMatrix& z, std::size_t k, std::mt19937_64& rng) {
  const auto n = static_cast<std::size_t>(z.rows());
  const std::size_t d = static_cast<std::size_t>(z.cols());
  std::vector<std::size_t> seeds;
  seeds.reserve(k);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  seeds.push_back(pick(rng));
  std::vector<double> best(n, std::numeric_limits<double>::infinity());
  const auto& kt = kernels::active();
  while (seeds.size() < k) {
    const double* c = z.row(static_cast<Eigen::Index>(seeds.back())).data();
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      best[i] = std::min(best[i], kt.squared_distance(z.row(static_cast<Eigen::Index>(i)).data(), c, d));
      total += best[i];
    }
    if (!(total > 0.0)) {
      seeds.push_back(pick(rng));
      continue;
    }
    std::uniform_real_distribution<double> u(0.0, total);
    double target = u(rng);
    std::size_t chosen = n - 1;
    for (std::size_t i = 0; i < n; ++i) {
      target -= best[i];
      if (target <= 0.0 && best[i] > 0.0) {
        chosen = i;
        break;
      }
    }
    seeds.push_back(chosen);
  }
  return seeds;
}

}  // namespace

GaussianMixture em_init(const RowMatrix& data, std::size_t k,
                        std::shared_ptr<const MetricTransform> metric, const EmOptions& options,
                        EmTrace* trace) {
  if (data.rows() == 0) throw InvalidArgument("em_init: empty data");
  if (k == 0) throw InvalidArgument("em_init: K must be at least 1");
  if (k > static_cast<std::size_t>(data.rows())) {
    throw InvalidArgument("em_init: K=" + std::to_string(k) + " exceeds number of points " +
                          std::to_string(data.rows()));
  }
  if (!metric) throw InvalidArgument("em_init: metric is null");
  if (!data.allFinite()) throw InvalidArgument("em_init: non-finite data");

  std::mt19937_64 rng(options.seed);

  RowMatrix points;
  if (options.max_points > 0 && static_cast<std::size_t>(data.rows()) > options.max_points) {
    std::vector<std::size_t> idx(static_cast<std::size_t>(data.rows()));
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(std::max(options.max_points, k));
    std::sort(idx.begin(), idx.end());
    points.resize(static_cast<Eigen::Index>(idx.size()), data.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      points.row(static_cast<Eigen::Index>(i)) = data.row(static_cast<Eigen::Index>(idx[i]));
    }
  } else {
    points = data;
  }

  const RowMatrix z = metric->whiten_rows(points);
  const auto n = static_cast<std::size_t>(z.rows());
  const std::size_t d = static_cast<std::size_t>(z.cols());
  const double dd = static_cast<double>(d);
  const double floor = options.scale_floor;

  RowMatrix means(static_cast<Eigen::Index>(k), z.cols());
  const auto seeds = kmeanspp_seeds(z, k, rng);
  for (std::size_t c = 0; c < k; ++c) {
    means.row(static_cast<Eigen::Index>(c)) = z.row(static_cast<Eigen::Index>(seeds[c]));
  }

  // Initial common scale from the nearest-seed spread.
  const auto& kt = kernels::active();
  std::vector<double> sq(k);
  double spread = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    kt.squared_distances(z.row(static_cast<Eigen::Index>(i)).data(), means.data(), k, d, sq.data());
    spread += *std::min_element(sq.begin(), sq.end());
  }
  const double init_scale = std::max(std::sqrt(spread / (static_cast<double>(n) * dd)), floor);
  Vector scales = Vector::Constant(static_cast<Eigen::Index>(k), init_scale);

  const double log_k = std::log(static_cast<double>(k));
  const double log_two_pi = std::log(2.0 * std::numbers::pi);
  RowMatrix resp(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));

  // E-step in whitened coordinates (the log det C term is a constant shift).
  auto e_step = [&]() {
    double total = 0.0;
    std::vector<double> terms(k);
    for (std::size_t i = 0; i < n; ++i) {
      kt.squared_distances(z.row(static_cast<Eigen::Index>(i)).data(), means.data(), k, d,
                           sq.data());
      for (std::size_t c = 0; c < k; ++c) {
        const double s = scales[static_cast<Eigen::Index>(c)];
        terms[c] = -log_k - 0.5 * dd * (log_two_pi + 2.0 * std::log(s)) - sq[c] / (2.0 * s * s);
      }
      const double lse = log_sum_exp(terms);
      total += lse;
      for (std::size_t c = 0; c < k; ++c) {
        resp(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = std::exp(terms[c] - lse);
      }
    }
    return total / static_cast<double>(n) - 0.5 * metric->log_det();
  };

  double ll = e_step();
  if (trace) {
    *trace = EmTrace{};
    trace->log_likelihood.push_back(ll);
    trace->intervened.push_back(false);
  }

  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  for (int it = 0; it < options.max_iters; ++it) {
    bool intervened = false;
    for (std::size_t c = 0; c < k; ++c) {
      const auto ci = static_cast<Eigen::Index>(c);
      const double mass = resp.col(ci).sum();
      if (!(mass > 1e-10)) {
        means.row(ci) = z.row(static_cast<Eigen::Index>(pick(rng)));
        scales[ci] = init_scale;
        intervened = true;
        if (trace) ++trace->reseed_events;
        continue;
      }
      const Eigen::RowVectorXd mean = (resp.col(ci).transpose() * z) / mass;
      means.row(ci) = mean;
      double ss = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        ss += resp(ii, ci) * (z.row(ii) - mean).squaredNorm();
      }
      double s = std::sqrt(ss / (mass * dd));
      if (!(s >= floor)) {
        s = floor;
        intervened = true;
        if (trace) ++trace->floor_events;
      }
      scales[ci] = s;
    }
    const double next = e_step();
    if (trace) {
      trace->log_likelihood.push_back(next);
      trace->intervened.push_back(intervened);
    }
    const bool converged = std::abs(next - ll) <= options.rel_tol * std::abs(ll);
    ll = next;
    if (converged && !intervened) break;
  }

  RowMatrix centroids(static_cast<Eigen::Index>(k), z.cols());
  for (std::size_t c = 0; c < k; ++c) {
    const auto ci = static_cast<Eigen::Index>(c);
    centroids.row(ci) = metric->unwhiten(means.row(ci).transpose()).transpose();
  }
  return GaussianMixture(std::move(metric), std::move(centroids), std::move(scales));
}

void project_scale_constraint(const GaussianMixture& in, GaussianMixture& out) {
  if (in.metric_ptr() != out.metric_ptr() &&
      in.metric().fingerprint() != out.metric().fingerprint()) {
    throw InvalidArgument("project_scale_constraint: mixtures use different metrics");
  }
  const double lower = 2.0 * in.max_scale();
  Vector scales = out.scales();
  bool changed = false;
  for (auto& s : scales) {
    if (s < lower) {
      s = lower;
      changed = true;
    }
  }
  if (changed) out.set_scales(std::move(scales));
}

}  // namespace ccu
