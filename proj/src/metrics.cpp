#include "bipc/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "bipc/rng.hpp"

namespace bipc::metrics {

namespace {

constexpr int kProbeIterations = 300;
constexpr double kProbeRate = 0.5;
constexpr double kProbeL2 = 1e-3;
constexpr std::size_t kMinRows = 10;

struct Split {
  Matrix train;
  Matrix test;
};

Split halve(const Matrix& m, Rng& rng) {
  const auto order = rng.permutation(m.rows());
  const std::size_t half = m.rows() / 2;
  std::vector<std::size_t> a(order.begin(), order.begin() + static_cast<long>(half));
  std::vector<std::size_t> b(order.begin() + static_cast<long>(half), order.end());
  return {gather_rows(m, a), gather_rows(m, b)};
}

double logit(std::span<const double> x, std::span<const double> mu, std::span<const double> sd,
             const std::vector<double>& w, double bias) {
  double z = bias;
  for (std::size_t k = 0; k < x.size(); ++k) z += w[k] * ((x[k] - mu[k]) / sd[k]);
  return z;
}

}  // namespace

double accuracy(std::span<const int> predictions, std::span<const int> labels) {
  require(predictions.size() == labels.size(), "accuracy: length mismatch");
  if (labels.empty()) return 0.0;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hit += predictions[i] == labels[i];
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

double proxy_a_distance(const Matrix& space_s, const Matrix& space_t, std::uint64_t seed) {
  require(space_s.cols() == space_t.cols(), "proxy_a_distance: widths differ");
  require(space_s.rows() >= kMinRows && space_t.rows() >= kMinRows,
          "proxy_a_distance: at least 10 rows per domain are required");
  const bool swap = std::lexicographical_compare(space_t.values().begin(), space_t.values().end(),
                                                 space_s.values().begin(), space_s.values().end());
  const Matrix& a = swap ? space_t : space_s;
  const Matrix& b = swap ? space_s : space_t;

  Rng rng = stream(seed, "probe");
  const Split sa = halve(a, rng);
  const Split sb = halve(b, rng);
  const std::size_t dim = a.cols();
  const std::size_t n_train = sa.train.rows() + sb.train.rows();

  std::vector<double> mu(dim, 0.0), sd(dim, 0.0);
  for (const Matrix* m : {&sa.train, &sb.train})
    for (std::size_t i = 0; i < m->rows(); ++i)
      for (std::size_t k = 0; k < dim; ++k) mu[k] += (*m)(i, k);
  for (double& v : mu) v /= static_cast<double>(n_train);
  for (const Matrix* m : {&sa.train, &sb.train})
    for (std::size_t i = 0; i < m->rows(); ++i)
      for (std::size_t k = 0; k < dim; ++k) sd[k] += ((*m)(i, k) - mu[k]) * ((*m)(i, k) - mu[k]);
  for (double& v : sd) v = std::max(std::sqrt(v / static_cast<double>(n_train)), 1e-8);

  std::vector<double> w(dim, 0.0), grad(dim);
  double bias = 0.0;
  for (int it = 0; it < kProbeIterations; ++it) {
    std::fill(grad.begin(), grad.end(), 0.0);
    double grad_b = 0.0;
    for (const auto& [m, label] : {std::pair{&sa.train, 0.0}, std::pair{&sb.train, 1.0}})
      for (std::size_t i = 0; i < m->rows(); ++i) {
        const auto x = m->row(i);
        const double r = 1.0 / (1.0 + std::exp(-logit(x, mu, sd, w, bias))) - label;
        for (std::size_t k = 0; k < dim; ++k) grad[k] += r * ((x[k] - mu[k]) / sd[k]);
        grad_b += r;
      }
    for (std::size_t k = 0; k < dim; ++k)
      w[k] -= kProbeRate * (grad[k] / static_cast<double>(n_train) + kProbeL2 * w[k]);
    bias -= kProbeRate * grad_b / static_cast<double>(n_train);
  }

  std::size_t wrong = 0;
  for (std::size_t i = 0; i < sa.test.rows(); ++i) wrong += logit(sa.test.row(i), mu, sd, w, bias) >= 0.0;
  for (std::size_t i = 0; i < sb.test.rows(); ++i) wrong += logit(sb.test.row(i), mu, sd, w, bias) < 0.0;
  const double err =
      static_cast<double>(wrong) / static_cast<double>(sa.test.rows() + sb.test.rows());
  return std::clamp(2.0 * (1.0 - 2.0 * err), 0.0, 2.0);
}

Fig1Distances fig1_analog(const model::ParamGroups& params, const Matrix& inputs_s,
                          const Matrix& inputs_t, std::uint64_t seed) {
  const Matrix f_s = model::feature_extract(params.theta, inputs_s);
  const Matrix f_t = model::feature_extract(params.theta, inputs_t);
  Fig1Distances d;
  d.feature_distance = proxy_a_distance(f_s, f_t, seed);
  d.probability_distance = proxy_a_distance(model::head_forward(params.theta_g, f_s),
                                            model::head_forward(params.theta_g, f_t), seed);
  return d;
}

}  // namespace bipc::metrics
