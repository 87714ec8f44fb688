#pragma once

#include <cstddef>
#include <span>

#include "ccu/data.hpp"
#include "ccu/model.hpp"

namespace ccu {

// Scores are compared after orientation so that larger means "more
// in-distribution". Use lower_is_in for distance-like scores.
enum class Orientation { higher_is_in, lower_is_in };

/// P(in > out) + 0.5 P(in = out), exact via average ranks.
double auc(std::span<const double> in_scores, std::span<const double> out_scores,
           Orientation orientation = Orientation::higher_is_in);

/// Step-wise area under precision/recall with in-distribution as the positive
/// class; one operating point per distinct score.
double aupr(std::span<const double> in_scores, std::span<const double> out_scores,
            Orientation orientation = Orientation::higher_is_in);

/// Lower middle order statistic for even sizes.
double lower_median(std::span<const double> values);

/// Fraction of attacked confidences strictly above the median in-confidence.
double success_rate(std::span<const double> attack_confidences, std::span<const double> in_confidences);

/// Misclassification rate under argmax of the predictive distribution.
double test_error(const CcuModel& model, const Dataset& labeled);

struct EvalReport {
  double auc = 0.0;
  double aupr = 0.0;
  double success_rate = 0.0;
  double test_error = 0.0;
  std::size_t n_in = 0;
  std::size_t n_out = 0;
};

}  // namespace ccu
