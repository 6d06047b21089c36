#pragma once

#include <cmath>
#include <vector>

#include "bipc/matrix.hpp"
#include "bipc/rng.hpp"

namespace testing {

inline bipc::Matrix random_matrix(std::size_t r, std::size_t c, bipc::Rng& rng, double scale = 1.0) {
  bipc::Matrix m(r, c);
  for (double& v : m.values()) v = scale * rng.normal();
  return m;
}

// Independent softmax: no shared code with the kernels.
inline bipc::Matrix softmax_oracle(const bipc::Matrix& x) {
  bipc::Matrix p(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double m = x(i, 0);
    for (std::size_t c = 1; c < x.cols(); ++c) m = std::max(m, x(i, c));
    double z = 0.0;
    for (std::size_t c = 0; c < x.cols(); ++c) z += std::exp(x(i, c) - m);
    for (std::size_t c = 0; c < x.cols(); ++c) p(i, c) = std::exp(x(i, c) - m) / z;
  }
  return p;
}

inline bipc::Matrix random_probs(std::size_t r, std::size_t c, bipc::Rng& rng, double scale = 2.0) {
  return softmax_oracle(random_matrix(r, c, rng, scale));
}

inline std::vector<int> random_labels(std::size_t n, int classes, bipc::Rng& rng) {
  std::vector<int> y(n);
  for (int& v : y) v = static_cast<int>(rng.below(static_cast<std::size_t>(classes)));
  return y;
}

inline double max_abs_diff(const bipc::Matrix& a, const bipc::Matrix& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a.values()[i] - b.values()[i]));
  return d;
}

}  // namespace testing
