// Runs acceptance criteria 1-9 and prints one PASS/FAIL line per criterion.
// Exit status is non-zero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "ccu/attack.hpp"
#include "ccu/certify.hpp"
#include "ccu/data.hpp"
#include "ccu/errors.hpp"
#include "ccu/eval.hpp"
#include "ccu/model_io.hpp"
#include "ccu/training.hpp"
#include "test_models.hpp"

namespace {

using namespace ccu;
using ccu::testing::ModelSpec;
using ccu::testing::random_model;
using ccu::testing::random_rows;
using ccu::testing::random_vector;
using ccu::testing::uniform;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Two-moons pipeline shared by criteria 1, 5, 8 and 9.
struct Toy {
  Dataset train, test, out;
  CcuModel model;
  ReluClassifier softmax_only;
  Vector center;
  double extent = 0.0;
  double train_seconds = 0.0;
  std::size_t steps = 0;
  std::size_t constraint_violations = 0;
};

PipelineConfig toy_config() {
  PipelineConfig cfg;
  cfg.hidden = {64, 64};
  cfg.k_in = 10;
  cfg.k_out = 10;
  cfg.train.epochs = 60;
  cfg.train.batch_size = 64;
  cfg.train.lr_classifier = 0.05;
  cfg.train.seed = 2024;
  return cfg;
}

Toy build_toy() {
  const auto t0 = std::chrono::steady_clock::now();
  Dataset train = two_moons(1000, 0.1, 1);
  Dataset test = two_moons(1000, 0.1, 2);
  // Broad uniform out-data around the moons; the box is not a constraint here.
  Dataset out = uniform_noise(1000, 2, 3);
  out.points = (out.points.array() * 7.0 - 3.0).matrix();
  out.domain = Domain::unbounded;

  const PipelineConfig cfg = toy_config();
  std::size_t steps = 0, violations = 0;
  TrainHooks hooks;
  hooks.on_step = [&](const CcuModel& m) {
    ++steps;
    if (!(m.out_gmm().min_scale() >= 2.0 * m.in_gmm().max_scale())) ++violations;
  };
  TrainResult r = fit_ccu(train, out, cfg, nullptr, hooks);

  std::vector<std::size_t> widths{2};
  widths.insert(widths.end(), cfg.hidden.begin(), cfg.hidden.end());
  widths.push_back(2);
  ReluClassifier sm = train_softmax_classifier(ReluClassifier::he_init(widths, cfg.train.seed + 3), train, cfg.train);

  Vector center = train.points.colwise().mean().transpose();
  double extent = 0.0;
  for (Eigen::Index i = 0; i < train.points.rows(); ++i) {
    extent = std::max(extent, (train.points.row(i).transpose() - center).norm());
  }
  Toy toy{std::move(train), std::move(test), std::move(out), std::move(r.model), std::move(sm), center, extent,
          0.0, steps, violations};
  toy.train_seconds = seconds_since(t0);
  return toy;
}

double accuracy(const Toy& toy) { return 1.0 - test_error(toy.model, toy.test); }

// Seeds in the far field (Euclidean distance > 10x the data extent).
RowMatrix far_seeds(const Toy& toy, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  RowMatrix s(static_cast<Eigen::Index>(n), 2);
  Eigen::Index k = 0;
  while (k < s.rows()) {
    Vector x(2);
    x << uniform(rng, -40, 40), uniform(rng, -40, 40);
    if ((x - toy.center).norm() > 10.0 * toy.extent) s.row(k++) = x.transpose();
  }
  return s;
}

struct SoundnessTally {
  std::size_t balls = 0, violations = 0;
  double worst_gap = -1.0;  // max of confidence - bound
};

void check_ball(const CcuModel& m, const Certificate& c, bool box, std::uint64_t seed, int samples,
                SoundnessTally& t) {
  AttackConfig ac;  // 500 steps x 50 restarts
  ac.seed = seed;
  const AttackResult r = pgd_max_confidence(m, c.center, std::max(c.radius, 1e-12), box, ac);
  double worst = r.best_confidence;
  if (r.feasibility_residual > 1e-6) ++t.violations;
  std::mt19937_64 rng(seed ^ 0x5bd1e995ULL);
  for (int s = 0; s < samples; ++s) {
    worst = std::max(worst, m.confidence(ccu::testing::sample_in_ball(rng, m.metric(), c.center, c.radius)));
  }
  ++t.balls;
  t.worst_gap = std::max(t.worst_gap, worst - c.bound);
  if (worst > c.bound + 1e-9) ++t.violations;
}

Outcome criterion1(const Toy& toy) {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(1);
  SoundnessTally t;
  std::size_t models = 0;
  const int samples = 100000;
  // Random models: half unbounded, half constrained to the unit box.
  while (models < 100) {
    const bool box = models % 2 == 1;
    ModelSpec spec;
    spec.d = 2 + models % 3;
    spec.classes = 2 + models % 4;
    spec.k_in = 1 + models % 3;
    spec.k_out = 1 + (models / 3) % 3;
    spec.hidden = models % 5 == 0 ? std::vector<std::size_t>{8, 8} : std::vector<std::size_t>{8};
    spec.lambda = uniform(rng, 0.5, 2.0);
    spec.theta_lo = 1.05;
    if (box) {
      spec.centroid_spread = 0.3;
      spec.sigma_lo = 0.05;
      spec.sigma_hi = 0.2;
    }
    CcuModel m = random_model(rng, spec);
    if (box) {
      m.in_gmm().set_centroids((m.in_gmm().centroids().array() + 0.5).matrix());
      m.out_gmm().set_centroids((m.out_gmm().centroids().array() + 0.5).matrix());
    }
    const double mcls = static_cast<double>(spec.classes);
    std::size_t got = 0;
    for (int tries = 0; tries < 200 && got < 2; ++tries) {
      Vector x0 = box ? Vector((random_vector(rng, spec.d).array().tanh() + 1.0) / 2.0)
                      : random_vector(rng, spec.d, 4.0);
      const double nu = uniform(rng, 1.01, std::min(mcls - 0.01, 1.5));
      try {
        const Certificate c = certified_radius(m, x0, nu);
        check_ball(m, c, box, rng(), samples, t);
        ++got;
      } catch (const NoCertificate&) {
      }
    }
    if (got > 0) ++models;
  }
  // The trained two-moons model on far-field seeds.
  const RowMatrix seeds = far_seeds(toy, 20, 7);
  for (Eigen::Index i = 0; i < seeds.rows(); ++i) {
    try {
      check_ball(toy.model, certified_radius(toy.model, seeds.row(i).transpose(), 1.1), false, 100 + i,
                 samples, t);
    } catch (const NoCertificate&) {
    }
  }
  ++models;
  const double secs = seconds_since(t0);
  return {t.violations == 0 && t.balls >= 200 && secs <= 600.0,
          fmt("%zu violations over %zu balls on %zu models, max(conf - bound) = %.3g, %.1f s", t.violations,
              t.balls, models, t.worst_gap, secs)};
}

Outcome criterion2() {
  std::mt19937_64 rng(2);
  std::size_t pairs = 0, bad = 0, far_bad = 0;
  double worst_far = 0.0;
  while (pairs < 1000) {
    ModelSpec spec;
    spec.d = 1 + pairs % 4;
    spec.classes = 2 + pairs % 4;
    spec.k_in = 1 + pairs % 3;
    spec.k_out = 1 + (pairs / 3) % 3;
    spec.lambda = uniform(rng, 0.5, 2.0);
    spec.theta_lo = 1.05;
    const CcuModel m = random_model(rng, spec);
    const RowMatrix train = random_rows(rng, 30, spec.d, 2.0);
    const double mcls = static_cast<double>(spec.classes);
    Vector dir = random_vector(rng, spec.d);
    dir /= dir.norm();
    const Vector base = random_vector(rng, spec.d, 2.0);
    for (double eps : {0.1, 1.0}) {
      double s = 0.5;
      FarFieldCheck f = far_field_required_distance(m, base + s * dir, train, eps);
      while (!f.satisfied) {
        s *= 1.25;
        f = far_field_required_distance(m, base + s * dir, train, eps);
      }
      if (m.confidence(base + s * dir) > (1.0 + eps) / mcls + 1e-9) ++bad;
      // Ten times the required distance.
      while (f.actual < 10.0 * f.required) {
        s *= 1.25;
        f = far_field_required_distance(m, base + s * dir, train, eps);
      }
      const double gap = m.confidence(base + s * dir) - 1.0 / mcls;
      worst_far = std::max(worst_far, gap);
      if (gap > 1e-6) ++far_bad;
    }
    ++pairs;
  }
  return {bad == 0 && far_bad == 0,
          fmt("%zu pairs x 2 eps: %zu bound violations, %zu far points above 1/M + 1e-6 (max gap %.3g)", pairs,
              bad, far_bad, worst_far)};
}

Outcome criterion3() {
  auto metric = std::make_shared<const MetricTransform>(MetricTransform::identity(1));
  DenseLayer layer{RowMatrix::Zero(2, 1), Vector::Zero(2)};
  RowMatrix c0(1, 1);
  c0 << 0.0;
  Vector s(1), t(1), x0(1);
  s << 1.0;
  t << 2.0;
  x0 << 10.0;
  const CcuModel single(ReluClassifier({layer}), GaussianMixture(metric, c0, s), GaussianMixture(metric, c0, t));
  const double q = 37.5 - std::log(18.0);
  const double oracle = (12.5 - std::sqrt(12.5 * 12.5 - 4.0 * 0.375 * q)) / 0.75;
  const double r = certified_radius(single, x0, 1.1).radius;
  bool ok = std::abs(r - 3.0474) <= 1e-3 && std::abs(r - oracle) <= 1e-3;

  std::mt19937_64 rng(3);
  double worst_rel = 0.0, worst_b0 = 0.0;
  std::size_t certs = 0;
  for (int i = 0; i < 1000; ++i) {
    ModelSpec spec;
    spec.d = 1 + i % 4;
    spec.classes = 2 + i % 4;
    spec.k_in = 1 + i % 3;
    spec.k_out = 1 + (i / 3) % 3;
    spec.lambda = uniform(rng, 0.5, 2.0);
    const CcuModel m = random_model(rng, spec);
    const Vector x = random_vector(rng, spec.d, 5.0);
    worst_b0 = std::max(worst_b0, std::abs(ball_log_b(m, x, 0.0) - (m.in_gmm().log_density(x) -
                                                                    m.out_gmm().log_density(x))));
    const double mcls = static_cast<double>(spec.classes);
    const double nu = uniform(rng, 1.01, mcls - 0.01);
    try {
      const Certificate c = certified_radius(m, x, nu);
      const double target = (nu - 1.0) / (mcls - nu) * m.lambda();
      worst_rel = std::max(worst_rel, std::abs(std::exp(ball_log_b(m, x, c.radius)) - target) / target);
      ++certs;
    } catch (const NoCertificate&) {
    }
  }
  ok = ok && worst_rel <= 1e-6 && worst_b0 <= 1e-12 && certs >= 100;
  return {ok, fmt("R = %.6f (oracle %.6f); %zu certificates, max |b - target|/target = %.2e; max |log b(0) - "
                  "log ratio| = %.2e",
                  r, oracle, certs, worst_rel, worst_b0)};
}

Outcome criterion4() {
  std::mt19937_64 rng(4);
  double worst = 0.0;
  const double h = 1e-6;
  for (int t = 0; t < 50; ++t) {
    ModelSpec spec;
    spec.d = 1 + t % 3;
    spec.classes = 2 + t % 3;
    spec.k_in = 1 + t % 3;
    spec.k_out = 1 + (t / 2) % 3;
    spec.hidden = t % 2 ? std::vector<std::size_t>{5} : std::vector<std::size_t>{4, 3};
    spec.lambda = uniform(rng, 0.5, 2.0);
    CcuModel m = random_model(rng, spec);
    const RowMatrix xin = random_rows(rng, 4, spec.d, 1.5), xout = random_rows(rng, 4, spec.d, 2.5);
    std::vector<int> labels(4);
    for (int i = 0; i < 4; ++i) labels[static_cast<std::size_t>(i)] = (i + t) % static_cast<int>(spec.classes);
    const std::vector<double> g = gradient_vector(loss_and_grads(m, xin, labels, xout).grads);
    std::vector<double> p = parameter_vector(m);
    Vector num(static_cast<Eigen::Index>(p.size())), ana(static_cast<Eigen::Index>(p.size()));
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double old = p[i];
      p[i] = old + h;
      set_parameter_vector(m, p);
      const double fp = joint_log_likelihood(m, xin, labels, xout);
      p[i] = old - h;
      set_parameter_vector(m, p);
      const double fm = joint_log_likelihood(m, xin, labels, xout);
      p[i] = old;
      set_parameter_vector(m, p);
      num[static_cast<Eigen::Index>(i)] = (fp - fm) / (2.0 * h);
      ana[static_cast<Eigen::Index>(i)] = g[i];
    }
    worst = std::max(worst, ccu::testing::relative_error(ana, num));
  }
  return {worst < 1e-4, fmt("50 instances, max relative error %.2e", worst)};
}

Outcome criterion5(const Toy& toy) {
  const double acc = accuracy(toy);
  double ccu_max = 0.0, sm_max = 0.0;
  std::size_t far = 0;
  const int res = 200;
  for (int i = 0; i < res; ++i) {
    for (int j = 0; j < res; ++j) {
      Vector x(2);
      x << -40.0 + 80.0 * i / (res - 1), -40.0 + 80.0 * j / (res - 1);
      if ((x - toy.center).norm() <= 10.0 * toy.extent) continue;
      ++far;
      ccu_max = std::max(ccu_max, toy.model.confidence(x));
      sm_max = std::max(sm_max, softmax(toy.softmax_only.forward(x)).maxCoeff());
    }
  }
  const bool ok = acc >= 0.95 && ccu_max <= 0.55 && sm_max > 0.9 && far > 0 && toy.train_seconds <= 120.0;
  return {ok, fmt("test accuracy %.4f; far field (%zu grid points beyond %.2f): CCU max confidence %.4f, "
                  "softmax max confidence %.4f; pipeline %.1f s",
                  acc, far, 10.0 * toy.extent, ccu_max, sm_max, toy.train_seconds)};
}

Outcome criterion6() {
  std::mt19937_64 rng(6);
  // Log-sum-exp versus direct summation.
  double worst = 0.0;
  std::size_t compared = 0;
  for (int t = 0; t < 200; ++t) {
    const std::size_t d = 2 + static_cast<std::size_t>(t) % 4;
    const CcuModel m = random_model(rng, ModelSpec{.d = d, .k_in = 1 + static_cast<std::size_t>(t) % 5});
    const GaussianMixture& g = m.in_gmm();
    const MetricTransform& metric = g.metric();
    double det = 1.0;
    for (Eigen::Index j = 0; j < metric.eigenvalues().size(); ++j) det *= metric.eigenvalues()[j];
    for (int q = 0; q < 20; ++q) {
      const Vector x = random_vector(rng, d, 2.0);
      double naive = 0.0;
      for (std::size_t k = 0; k < g.size(); ++k) {
        const auto ki = static_cast<Eigen::Index>(k);
        const double s2 = g.scales()[ki] * g.scales()[ki];
        const double dist = metric.distance(x, g.centroids().row(ki).transpose());
        naive += std::exp(-dist * dist / (2.0 * s2)) /
                 (std::pow(2.0 * std::numbers::pi * s2, 0.5 * static_cast<double>(d)) * std::sqrt(det));
      }
      naive /= static_cast<double>(g.size());
      if (!(naive > 1e-300) || !std::isfinite(naive)) continue;
      worst = std::max(worst, std::abs(std::exp(g.log_density(x)) - naive) / naive);
      ++compared;
    }
  }
  // Monte Carlo normalization in d = 2: importance sampling from a broad
  // Gaussian proposal around the centroid mean.
  double worst_mc = 0.0;
  for (int t = 0; t < 5; ++t) {
    const CcuModel m = random_model(rng, ModelSpec{.d = 2, .k_in = 3});
    const GaussianMixture& g = m.in_gmm();
    const Vector mean = g.centroids().colwise().mean().transpose();
    double spread = 0.0;
    for (Eigen::Index k = 0; k < g.centroids().rows(); ++k) {
      spread = std::max(spread, (g.whitened_centroids().row(k).transpose() - g.metric().whiten(mean)).norm());
    }
    const double s = spread + 3.0 * g.max_scale();  // proposal scale in whitened units
    std::normal_distribution<double> normal;
    const int n = 1000000;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
      Vector u(2);
      u << normal(rng), normal(rng);
      const Vector x = mean + g.metric().unwhiten(s * u);
      const double log_q = -std::log(2.0 * std::numbers::pi * s * s) - 0.5 * g.metric().log_det() -
                           0.5 * u.squaredNorm();
      sum += std::exp(g.log_density(x) - log_q);
    }
    worst_mc = std::max(worst_mc, std::abs(sum / n - 1.0));
  }
  // Triangle inequality.
  std::size_t tri_bad = 0;
  for (int t = 0; t < 1000; ++t) {
    const auto metric = ccu::testing::random_metric(rng, 3, 1e-3, 10.0);
    const Vector a = random_vector(rng, 3, 3.0), b = random_vector(rng, 3, 3.0), c = random_vector(rng, 3, 3.0);
    if (metric->distance(a, c) > metric->distance(a, b) + metric->distance(b, c) + 1e-12) ++tri_bad;
  }
  return {worst <= 1e-10 && compared > 1000 && worst_mc <= 0.02 && tri_bad == 0,
          fmt("LSE vs naive max rel %.2e over %zu points; MC normalization max |Z - 1| = %.4f; %zu triangle "
              "failures",
              worst, compared, worst_mc, tri_bad)};
}

Outcome criterion7() {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> level(0, 12);
  double worst_auc = 0.0, worst_aupr = 0.0, worst_rev = 0.0;
  for (int t = 0; t < 100; ++t) {
    std::vector<double> in(5 + static_cast<std::size_t>(t) % 40), out(3 + static_cast<std::size_t>(t * 7) % 45);
    for (auto& v : in) v = level(rng) * 0.25;
    for (auto& v : out) v = level(rng) * 0.25 - 0.5;
    double pair = 0.0;
    for (double a : in) {
      for (double b : out) pair += a > b ? 1.0 : (a == b ? 0.5 : 0.0);
    }
    pair /= static_cast<double>(in.size() * out.size());
    worst_auc = std::max(worst_auc, std::abs(auc(in, out) - pair));
    worst_rev = std::max(worst_rev, std::abs(auc(in, out) + auc(out, in) - 1.0));
    std::set<double, std::greater<>> th(in.begin(), in.end());
    th.insert(out.begin(), out.end());
    double area = 0.0, prev = 0.0;
    for (double c : th) {
      double tp = 0, fp = 0;
      for (double a : in) tp += a >= c ? 1 : 0;
      for (double b : out) fp += b >= c ? 1 : 0;
      const double recall = tp / static_cast<double>(in.size());
      area += (recall - prev) * tp / (tp + fp);
      prev = recall;
    }
    worst_aupr = std::max(worst_aupr, std::abs(aupr(in, out) - area));
  }
  return {worst_auc <= 1e-12 && worst_aupr <= 1e-12 && worst_rev <= 1e-12,
          fmt("100 tied score sets: max |AUC - pairwise| %.1e, max |AUPR - thresholds| %.1e, max reversal "
              "defect %.1e",
              worst_auc, worst_aupr, worst_rev)};
}

// Far from the data the predictive rounds to exactly 1/M in every class, so
// its argmax is a tie with no ranking left to compare. Agreement is required
// wherever the predictive maximum is unique in double precision; saturated
// ties are counted and reported.
struct RankTally {
  std::size_t inputs = 0, disagree = 0, saturated = 0;
  void add(const CcuModel& m, const Vector& x) {
    ++inputs;
    const Vector p = m.predictive(x);
    const std::size_t a = argmax(p);
    if ((p.array() == p[static_cast<Eigen::Index>(a)]).count() > 1) {
      ++saturated;
      return;
    }
    if (a != argmax(m.classifier().forward(x))) ++disagree;
  }
};

Outcome criterion8(const Toy& toy) {
  std::mt19937_64 rng(8);
  RankTally r;
  for (int i = 0; i < 10000; ++i) {
    Vector x(2);
    x << uniform(rng, -40, 40), uniform(rng, -40, 40);
    r.add(toy.model, x);
    x << uniform(rng, -3, 4), uniform(rng, -3, 4);  // around the data
    r.add(toy.model, x);
  }
  for (int k = 0; k < 100; ++k) {
    const CcuModel m = random_model(rng, ModelSpec{.d = 3, .classes = 5});
    for (int i = 0; i < 100; ++i) r.add(m, random_vector(rng, 3, 5.0));
  }
  return {toy.constraint_violations == 0 && toy.steps > 0 && r.disagree == 0 && r.inputs - r.saturated >= 10000,
          fmt("%zu/%zu training steps violate min theta >= 2 max sigma; %zu argmax disagreements over %zu "
              "inputs (%zu saturated to an exact tie)",
              toy.constraint_violations, toy.steps, r.disagree, r.inputs, r.saturated)};
}

Outcome criterion9(const Toy& toy) {
  const RowMatrix seeds = far_seeds(toy, 200, 9);
  std::size_t certs = 0, none = 0, inside = 0;
  for (Eigen::Index i = 0; i < seeds.rows(); ++i) {
    try {
      const Certificate c = certified_radius(toy.model, seeds.row(i).transpose(), 1.1);
      ++certs;
      inside += ball_contains_points(toy.model.metric(), c.center, c.radius, toy.train.points);
      inside += ball_contains_points(toy.model.metric(), c.center, c.radius, toy.test.points);
    } catch (const NoCertificate&) {
      ++none;
    }
  }
  const ConfidenceCensus a = low_confidence_census(toy.model, toy.test.points, 1.1 / 2.0);
  // Rerun the whole pipeline and the census.
  const Toy again = build_toy();
  const ConfidenceCensus b = low_confidence_census(again.model, again.test.points, 1.1 / 2.0);
  const bool same_model = serialize_model(again.model) == serialize_model(toy.model);
  const bool ok = certs == 200 && none == 0 && inside == 0 && same_model && a.min_confidence == b.min_confidence &&
                  a.below_threshold == b.below_threshold;
  return {ok, fmt("%zu certified far balls (%zu without certificate), %zu data points inside; census "
                  "(min %.6f, %zu below 0.55) rerun (min %.6f, %zu)",
                  certs, none, inside, a.min_confidence, a.below_threshold, b.min_confidence, b.below_threshold)};
}

}  // namespace

int main() {
  const auto t0 = std::chrono::steady_clock::now();
  const Toy toy = build_toy();
  struct Item {
    int id;
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Item> items{
      {1, "certificate soundness", [&] { return criterion1(toy); }},
      {2, "far-field distance bound", criterion2},
      {3, "radius bisection", criterion3},
      {4, "objective gradients", criterion4},
      {5, "two-moons far-field confidence", [&] { return criterion5(toy); }},
      {6, "metric and mixture numerics", criterion6},
      {7, "evaluation oracles", criterion7},
      {8, "scale constraint and ranking", [&] { return criterion8(toy); }},
      {9, "ball audit and census", [&] { return criterion9(toy); }},
  };
  int failed = 0;
  for (const auto& item : items) {
    const auto ti = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = item.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s criterion %d (%s): %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", item.id, item.name,
                o.detail.c_str(), seconds_since(ti));
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  }
  std::printf("%d of %zu criteria passed in %.1f s\n", static_cast<int>(items.size()) - failed, items.size(),
              seconds_since(t0));
  return failed == 0 ? 0 : 1;
}
