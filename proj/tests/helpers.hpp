#pragma once

#include <random>

#include "eclip/tensor.hpp"

namespace eclip::testing {

inline Mat random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, Real scale = 1.0) {
  std::normal_distribution<Real> n(0.0, scale);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

inline Real max_rel(const Mat& a, const Mat& b) {
  const Real scale = std::max({a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff(), Real(1e-300)});
  return (a - b).cwiseAbs().maxCoeff() / scale;
}

}  // namespace eclip::testing
