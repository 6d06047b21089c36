#include "bipc/selfcheck.hpp"

#include <cmath>
#include <cstdio>
#include <functional>

#include "bipc/config.hpp"
#include "bipc/gradcheck.hpp"
#include "bipc/kernels.hpp"
#include "bipc/losses.hpp"
#include "bipc/rng.hpp"

namespace bipc {

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
  Matrix m(r, c);
  for (double& v : m.values()) v = scale * rng.normal();
  return m;
}

Matrix random_probs(std::size_t r, std::size_t c, Rng& rng) {
  Matrix p;
  Matrix logits = random_matrix(r, c, rng, 2.0);
  p = Matrix(r, c);
  kernels::serial::row_softmax(logits, p);
  return p;
}

std::vector<int> random_labels(std::size_t n, int classes, Rng& rng) {
  std::vector<int> y(n);
  for (int& v : y) v = static_cast<int>(rng.below(static_cast<std::size_t>(classes)));
  return y;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

CheckResult check(const std::string& name, const std::function<std::string()>& body) {
  try {
    const std::string failure = body();
    return {name, failure.empty(), failure};
  } catch (const std::exception& e) {
    return {name, false, std::string("threw: ") + e.what()};
  }
}

}  // namespace

std::vector<CheckResult> run_selfchecks() {
  std::vector<CheckResult> out;
  Rng rng(20240611);

  out.push_back(check("softmax rows sum to one", [&] {
    for (int t = 0; t < 20; ++t) {
      const Matrix p = random_probs(5, 7, rng);
      for (std::size_t i = 0; i < p.rows(); ++i) {
        double s = 0.0;
        for (double v : p.row(i)) {
          if (!(v > 0.0)) return std::string("non-positive entry");
          s += v;
        }
        if (std::abs(s - 1.0) > 1e-12) return "row sum off by " + num(s - 1.0);
      }
    }
    return std::string();
  }));

  out.push_back(check("serial and parallel kernels agree bit-for-bit", [&] {
    const Matrix a = random_matrix(70, 90, rng);
    const Matrix b = random_matrix(90, 60, rng);
    Matrix s(70, 60), p(70, 60);
    kernels::serial::matmul(a, b, s);
    kernels::parallel::matmul(a, b, p);
    return s == p ? std::string() : std::string("matmul differs");
  }));

  out.push_back(check("loss gradients match finite differences", [&] {
    double worst = 0.0;
    for (int t = 0; t < 5; ++t) {
      const std::size_t n = 2 + rng.below(5), c1 = 2 + rng.below(3), c2 = c1 + rng.below(4);
      const auto ys = random_labels(n, static_cast<int>(c1), rng);
      const auto proto = model::Prototype::from_unnormalized(random_probs(c1, c2, rng));
      const Matrix alpha =
          loss::calibration_weights(loss::one_hot(ys, static_cast<int>(c1)), random_probs(n, c1, rng))
              .alpha_st;
      worst = std::max(worst, finite_difference_check(
                                  [&](Tape&, std::span<const Var> v) {
                                    return loss::cpa_loss(row_softmax(v[0]), row_softmax(v[1]), alpha,
                                                          ys, proto);
                                  },
                                  {random_matrix(n, c2, rng), random_matrix(n, c2, rng)}));
      const Matrix p_tilde = random_probs(n, c1, rng);
      std::vector<double> beta(n);
      for (double& b : beta) b = 0.05 + 0.9 * rng.uniform();
      worst = std::max(worst, finite_difference_check(
                                  [&](Tape&, std::span<const Var> v) {
                                    return loss::calibrated_penalty(row_softmax(v[0]), p_tilde, beta,
                                                                    loss::PenaltyVariant::cgi);
                                  },
                                  {random_matrix(n, c1, rng)}));
      worst = std::max(worst, finite_difference_check(
                                  [&](Tape&, std::span<const Var> v) {
                                    return loss::classification_loss(row_softmax(v[0]), ys, 0.1);
                                  },
                                  {random_matrix(n, c1, rng)}));
    }
    return worst < 1e-4 ? std::string() : "max relative error " + num(worst);
  }));

  out.push_back(check("JS divergence identity", [&] {
    for (int t = 0; t < 50; ++t) {
      const Matrix pq = random_probs(2, 6, rng);
      const auto p = pq.row(0), q = pq.row(1);
      double rhs = loss::pair_distance(p, q) + std::log(2.0);
      for (std::size_t c = 0; c < p.size(); ++c) rhs += 0.5 * p[c] * std::log(p[c]) + 0.5 * q[c] * std::log(q[c]);
      if (std::abs(loss::js_divergence(p, q) - rhs) > 1e-10) return std::string("identity violated");
    }
    return std::string();
  }));

  out.push_back(check("beta in (0, 1]", [&] {
    for (int t = 0; t < 200; ++t) {
      const Matrix pq = random_probs(2, 4, rng);
      const double b = loss::beta_factor(pq.row(0), pq.row(1));
      if (!(b > 0.0 && b <= 1.0)) return "beta = " + num(b);
      if (loss::beta_factor(pq.row(0), pq.row(0)) != 1.0) return std::string("beta(p, p) != 1");
    }
    return std::string();
  }));

  out.push_back(check("CGI with beta = 1 equals GI", [&] {
    for (int t = 0; t < 20; ++t) {
      const Matrix p = random_probs(6, 4, rng), p_tilde = random_probs(6, 4, rng);
      const std::vector<double> ones(6, 1.0);
      Tape tape;
      const double cgi =
          loss::calibrated_penalty(tape.constant(p), p_tilde, ones, loss::PenaltyVariant::cgi)
              .value()
              .item();
      if (cgi != loss::gini_impurity(p)) return std::string("values differ");
    }
    return std::string();
  }));

  out.push_back(check("prototype is permutation invariant", [&] {
    const Matrix p = random_probs(12, 5, rng);
    const auto y = random_labels(12, 2, rng);
    std::vector<int> labels(y);
    labels[0] = 0;
    labels[1] = 1;
    auto perm = rng.permutation(12);
    std::vector<int> shuffled_labels;
    for (std::size_t i : perm) shuffled_labels.push_back(labels[i]);
    const auto a = model::learn_prototype(p, labels, 2);
    const auto b = model::learn_prototype(gather_rows(p, perm), shuffled_labels, 2);
    return a == b ? std::string() : std::string("prototype changed under row shuffle");
  }));

  out.push_back(check("config round-trips", [&] {
    cli::ExperimentConfig cfg;
    cfg.seed = 99;
    cfg.schedule.eta0 = 0.1 + 1e-17;
    cfg.generator.shift.translation = {0.25, -1.0 / 3.0};
    cfg.generator.dim = 2;
    cfg.train.focal_gamma = 2.0;
    if (cli::parse_config(cli::serialize_config(cfg)) == cfg) return std::string();
    return std::string("mismatch");
  }));

  return out;
}

}  // namespace bipc
