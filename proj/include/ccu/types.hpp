#pragma once

#include <Eigen/Core>
#include <span>

namespace ccu {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
// Point sets are stored one sample per row so each sample is contiguous.
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline std::span<const double> as_span(const Vector& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}
inline std::span<double> as_span(Vector& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

}  // namespace ccu
