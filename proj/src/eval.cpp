#include "ccu/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "ccu/errors.hpp"

namespace ccu {
namespace {

struct Scored {
  double score;
  bool positive;
};

std::vector<Scored> pool(std::span<const double> in, std::span<const double> out, Orientation o,
                         const char* what) {
  if (in.empty() || out.empty()) throw InvalidArgument(std::string(what) + ": empty score list");
  const double sign = o == Orientation::higher_is_in ? 1.0 : -1.0;
  std::vector<Scored> all;
  all.reserve(in.size() + out.size());
  for (double s : in) all.push_back({sign * s, true});
  for (double s : out) all.push_back({sign * s, false});
  for (const auto& s : all) {
    if (std::isnan(s.score)) throw InvalidArgument(std::string(what) + ": NaN score");
  }
  return all;
}

}  // namespace

double auc(std::span<const double> in_scores, std::span<const double> out_scores, Orientation orientation) {
  auto all = pool(in_scores, out_scores, orientation, "auc");
  std::sort(all.begin(), all.end(), [](const Scored& a, const Scored& b) { return a.score < b.score; });
  // Sum of (1-based, tie-averaged) ranks of the positives.
  double rank_sum = 0.0;
  std::size_t i = 0;
  while (i < all.size()) {
    std::size_t j = i;
    std::size_t pos = 0;
    while (j < all.size() && all[j].score == all[i].score) {
      pos += all[j].positive ? 1 : 0;
      ++j;
    }
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
    rank_sum += avg_rank * static_cast<double>(pos);
    i = j;
  }
  const auto n_in = static_cast<double>(in_scores.size());
  const auto n_out = static_cast<double>(out_scores.size());
  return (rank_sum - n_in * (n_in + 1.0) / 2.0) / (n_in * n_out);
}

double aupr(std::span<const double> in_scores, std::span<const double> out_scores, Orientation orientation) {
  auto all = pool(in_scores, out_scores, orientation, "aupr");
  std::sort(all.begin(), all.end(), [](const Scored& a, const Scored& b) { return a.score > b.score; });
  const auto n_in = static_cast<double>(in_scores.size());
  double tp = 0.0, fp = 0.0, prev_recall = 0.0, area = 0.0;
  std::size_t i = 0;
  while (i < all.size()) {
    std::size_t j = i;
    while (j < all.size() && all[j].score == all[i].score) {
      (all[j].positive ? tp : fp) += 1.0;
      ++j;
    }
    const double recall = tp / n_in;
    area += (recall - prev_recall) * (tp / (tp + fp));
    prev_recall = recall;
    i = j;
  }
  return area;
}

double lower_median(std::span<const double> values) {
  if (values.empty()) throw InvalidArgument("median: empty list");
  std::vector<double> v(values.begin(), values.end());
  const std::size_t k = (v.size() - 1) / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k), v.end());
  return v[k];
}

double success_rate(std::span<const double> attack_confidences, std::span<const double> in_confidences) {
  if (attack_confidences.empty()) throw InvalidArgument("success_rate: empty attack list");
  const double med = lower_median(in_confidences);
  const auto above = std::count_if(attack_confidences.begin(), attack_confidences.end(),
                                   [&](double c) { return c > med; });
  return static_cast<double>(above) / static_cast<double>(attack_confidences.size());
}

double test_error(const CcuModel& model, const Dataset& labeled) {
  if (labeled.size() == 0) throw InvalidArgument("test_error: empty dataset");
  if (!labeled.labeled()) throw InvalidArgument("test_error: dataset has no labels");
  labeled.validate(model.num_classes());
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < labeled.size(); ++i) {
    const Vector p = model.predictive(labeled.point(i));
    if (static_cast<int>(argmax(p)) != labeled.labels[i]) ++wrong;
  }
  return static_cast<double>(wrong) / static_cast<double>(labeled.size());
}

}  // namespace ccu
