#include "bipc/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace bipc::loss {

namespace {

double safe_log(double x) { return std::log(x > kEps ? x : kEps); }

void require_rows_match(const Matrix& a, const Matrix& b, const char* what) {
  if (!a.same_shape(b)) throw ContractViolation(std::string(what) + ": shape mismatch");
}

Matrix column(std::span<const double> values) {
  return Matrix(values.size(), 1, std::vector<double>(values.begin(), values.end()));
}

Var gini_rows(Var p) { return scalar_affine(row_sum(elementwise_mul(p, p)), -1.0, 1.0); }

Var entropy_rows(Var p) {
  return scalar_affine(row_sum(elementwise_mul(p, elementwise_log(clamp_min(p)))), -1.0, 0.0);
}

Var penalty_rows(Var p, bool gini) { return gini ? gini_rows(p) : entropy_rows(p); }

void check_labels(std::span<const int> labels, std::size_t rows, std::size_t classes,
                  const char* what) {
  require(labels.size() == rows, std::string(what) + ": one label per row required");
  for (int y : labels)
    if (y < 0 || static_cast<std::size_t>(y) >= classes)
      throw ContractViolation(std::string(what) + ": label " + std::to_string(y) +
                              " out of range");
}

}  // namespace

const char* name(BetaVariant v) noexcept {
  switch (v) {
    case BetaVariant::constant_half: return "constant_half";
    case BetaVariant::exp_neg_entropy: return "exp_neg_entropy";
    case BetaVariant::max_prob: return "max_prob";
    case BetaVariant::exp_neg_kl: return "exp_neg_kl";
  }
  return "?";
}

const char* name(PenaltyVariant v) noexcept {
  switch (v) {
    case PenaltyVariant::ge: return "GE";
    case PenaltyVariant::cge: return "CGE";
    case PenaltyVariant::gi: return "GI";
    case PenaltyVariant::cgi_noreg: return "CGI_noreg";
    case PenaltyVariant::cgi: return "CGI";
  }
  return "?";
}

BetaVariant parse_beta_variant(const std::string& text) {
  for (auto v : {BetaVariant::constant_half, BetaVariant::exp_neg_entropy, BetaVariant::max_prob,
                 BetaVariant::exp_neg_kl})
    if (text == name(v)) return v;
  throw ContractViolation("unknown beta variant '" + text + "'");
}

PenaltyVariant parse_penalty_variant(const std::string& text) {
  for (auto v : {PenaltyVariant::ge, PenaltyVariant::cge, PenaltyVariant::gi,
                 PenaltyVariant::cgi_noreg, PenaltyVariant::cgi})
    if (text == name(v)) return v;
  throw ContractViolation("unknown penalty variant '" + text + "'");
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  require(p.size() == q.size(), "kl_divergence: length mismatch");
  double acc = 0.0;
  for (std::size_t c = 0; c < p.size(); ++c)
    if (p[c] > 0.0) acc += p[c] * (safe_log(p[c]) - safe_log(q[c]));
  return acc;
}

double entropy(std::span<const double> p) {
  double acc = 0.0;
  for (double v : p)
    if (v > 0.0) acc -= v * safe_log(v);
  return acc;
}

double pair_distance(std::span<const double> p, std::span<const double> q) {
  require(p.size() == q.size(), "pair_distance: length mismatch");
  double acc = 0.0;
  for (std::size_t c = 0; c < p.size(); ++c) {
    const double s = p[c] + q[c];
    if (s > 0.0) acc += s * safe_log(s);
  }
  return -0.5 * acc;
}

double js_divergence(std::span<const double> p, std::span<const double> q) {
  require(p.size() == q.size(), "js_divergence: length mismatch");
  std::vector<double> mid(p.size());
  for (std::size_t c = 0; c < p.size(); ++c) mid[c] = 0.5 * (p[c] + q[c]);
  return 0.5 * kl_divergence(p, mid) + 0.5 * kl_divergence(q, mid);
}

Matrix one_hot(std::span<const int> labels, int classes) {
  require(classes > 0, "one_hot: class count must be positive");
  Matrix y(labels.size(), static_cast<std::size_t>(classes));
  check_labels(labels, labels.size(), y.cols(), "one_hot");
  for (std::size_t i = 0; i < labels.size(); ++i) y(i, static_cast<std::size_t>(labels[i])) = 1.0;
  return y;
}

Matrix source_weights(const Matrix& y_s) {
  Matrix counts(1, y_s.cols());
  for (std::size_t i = 0; i < y_s.rows(); ++i)
    for (std::size_t c = 0; c < y_s.cols(); ++c) counts(0, c) += y_s(i, c);
  Matrix alpha(y_s.rows(), y_s.cols());
  for (std::size_t i = 0; i < y_s.rows(); ++i)
    for (std::size_t c = 0; c < y_s.cols(); ++c)
      if (counts(0, c) > 0.0) alpha(i, c) = y_s(i, c) / counts(0, c);
  return alpha;
}

PseudoLabels pseudo_labels(const Matrix& p_h_t) {
  PseudoLabels out;
  out.classes = row_argmax(p_h_t);
  out.one_hot = Matrix(p_h_t.rows(), p_h_t.cols());
  for (std::size_t j = 0; j < p_h_t.rows(); ++j)
    out.one_hot(j, static_cast<std::size_t>(out.classes[j])) = 1.0;
  return out;
}

Matrix target_weights(const Matrix& p_h_t, const PseudoLabels& pseudo) {
  require_rows_match(p_h_t, pseudo.one_hot, "target_weights");
  Matrix col(1, p_h_t.cols());
  for (std::size_t j = 0; j < p_h_t.rows(); ++j)
    for (std::size_t c = 0; c < p_h_t.cols(); ++c) col(0, c) += p_h_t(j, c);
  Matrix alpha(p_h_t.rows(), p_h_t.cols());
  for (std::size_t j = 0; j < p_h_t.rows(); ++j)
    for (std::size_t c = 0; c < p_h_t.cols(); ++c)
      if (pseudo.one_hot(j, c) != 0.0 && col(0, c) > 0.0)
        alpha(j, c) = pseudo.one_hot(j, c) * (p_h_t(j, c) / col(0, c));
  return alpha;
}

Matrix calibration_matrix(const Matrix& alpha_s, const Matrix& alpha_t) {
  require(alpha_s.cols() == alpha_t.cols(), "calibration_matrix: class counts differ");
  Matrix out(alpha_s.rows(), alpha_t.rows());
  for (std::size_t i = 0; i < alpha_s.rows(); ++i)
    for (std::size_t j = 0; j < alpha_t.rows(); ++j) {
      double acc = 0.0;
      for (std::size_t c = 0; c < alpha_s.cols(); ++c) acc += alpha_s(i, c) * alpha_t(j, c);
      out(i, j) = acc;
    }
  return out;
}

CalibrationWeights calibration_weights(const Matrix& y_s, const Matrix& p_h_t) {
  CalibrationWeights w;
  w.alpha_s = source_weights(y_s);
  w.alpha_t = target_weights(p_h_t, pseudo_labels(p_h_t));
  w.alpha_st = calibration_matrix(w.alpha_s, w.alpha_t);
  return w;
}

Var cpa_alignment(Var p_g_s, Var p_g_t, const Matrix& alpha_st) {
  const std::size_t ns = p_g_s.value().rows();
  const std::size_t nt = p_g_t.value().rows();
  require(alpha_st.rows() == ns && alpha_st.cols() == nt,
          "cpa_alignment: alpha_st must be n_s x n_t");
  Tape& tape = p_g_s.tape();
  const Var sums = pairwise_add(p_g_s, p_g_t);
  const Var per_pair = row_sum(elementwise_mul(sums, elementwise_log(clamp_min(sums))));
  const Var weights = tape.constant(Matrix(ns * nt, 1, std::vector<double>(
                                               alpha_st.values().begin(), alpha_st.values().end())));
  return scalar_affine(total(elementwise_mul(per_pair, weights)), -0.5, 0.0);
}

Var prototype_regularizer(Var p_g_s, std::span<const int> labels, const Prototype& proto) {
  const Matrix& p = p_g_s.value();
  require(p.cols() == proto.pretrain_classes(),
          "prototype_regularizer: probability width differs from prototype");
  check_labels(labels, p.rows(), proto.task_classes(), "prototype_regularizer");
  Matrix targets(p.rows(), p.cols());
  Matrix log_targets(p.rows(), p.cols());
  for (std::size_t i = 0; i < p.rows(); ++i) {
    auto m = proto.row(static_cast<std::size_t>(labels[i]));
    for (std::size_t k = 0; k < p.cols(); ++k) {
      targets(i, k) = m[k];
      log_targets(i, k) = std::log(m[k]);
    }
  }
  Tape& tape = p_g_s.tape();
  const Var log_ratio = sub(tape.constant(std::move(log_targets)),
                            elementwise_log(clamp_min(p_g_s)));
  return total(elementwise_mul(tape.constant(std::move(targets)), log_ratio));
}

Var cpa_loss(Var p_g_s, Var p_g_t, const Matrix& alpha_st, std::span<const int> labels,
             const Prototype& proto) {
  return add(cpa_alignment(p_g_s, p_g_t, alpha_st), prototype_regularizer(p_g_s, labels, proto));
}

double prototype_regularizer(const Matrix& p_g_s, std::span<const int> labels,
                             const Prototype& proto) {
  Tape tape;
  return prototype_regularizer(tape.constant(p_g_s), labels, proto).value().item();
}

double cpa_loss(const Matrix& p_g_s, const Matrix& p_g_t, const Matrix& alpha_st,
                std::span<const int> labels, const Prototype& proto) {
  Tape tape;
  return cpa_loss(tape.constant(p_g_s), tape.constant(p_g_t), alpha_st, labels, proto)
      .value()
      .item();
}

Var gini_impurity(Var p) { return col_sum(gini_rows(p)); }

double gini_impurity(const Matrix& p) {
  Tape tape;
  return gini_impurity(tape.constant(p)).value().item();
}

Var gibbs_entropy(Var p) { return col_sum(entropy_rows(p)); }

Matrix transform_probability(const Matrix& p_g_t, const Prototype& proto) {
  require(p_g_t.cols() == proto.pretrain_classes(),
          "transform_probability: probability width differs from prototype");
  Matrix out(p_g_t.rows(), proto.task_classes());
  for (std::size_t j = 0; j < p_g_t.rows(); ++j) {
    auto row = out.row(j);
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < row.size(); ++c) {
      row[c] = -kl_divergence(proto.row(c), p_g_t.row(j));
      peak = std::max(peak, row[c]);
    }
    double z = 0.0;
    for (double& v : row) {
      v = std::exp(v - peak);
      z += v;
    }
    for (double& v : row) v /= z;
  }
  return out;
}

double beta_factor(std::span<const double> p_tilde, std::span<const double> p_h) {
  return std::exp(-kl_divergence(p_tilde, p_h));
}

Matrix mixed_probability(const Matrix& p_tilde, const Matrix& p_h) {
  require_rows_match(p_tilde, p_h, "mixed_probability");
  Matrix out(p_h.rows(), p_h.cols());
  for (std::size_t i = 0; i < out.size(); ++i)
    out.values()[i] = 0.5 * (p_h.values()[i] + p_tilde.values()[i]);
  return out;
}

Var calibrated_penalty(Var p_h_t, const Matrix& p_tilde, std::span<const double> beta,
                       PenaltyVariant variant) {
  const Matrix& p = p_h_t.value();
  Tape& tape = p_h_t.tape();
  const bool gini = variant == PenaltyVariant::gi || variant == PenaltyVariant::cgi ||
                    variant == PenaltyVariant::cgi_noreg;
  if (variant == PenaltyVariant::gi || variant == PenaltyVariant::ge)
    return col_sum(penalty_rows(p_h_t, gini));

  require(beta.size() == p.rows(), "calibrated_penalty: one beta per row required");
  const Var b = tape.constant(column(beta));
  const Var own = elementwise_mul(b, penalty_rows(p_h_t, gini));
  if (variant == PenaltyVariant::cgi_noreg) return col_sum(own);

  require_rows_match(p_tilde, p, "calibrated_penalty");
  std::vector<double> rest(beta.size());
  for (std::size_t j = 0; j < beta.size(); ++j) rest[j] = 1.0 - beta[j];
  const Var mixed = scalar_affine(add(p_h_t, tape.constant(p_tilde)), 0.5, 0.0);
  const Var fallback = elementwise_mul(tape.constant(column(rest)), penalty_rows(mixed, gini));
  return col_sum(add(own, fallback));
}

CgiResult cgi_loss(Var p_h_t, const Matrix& p_g_t, const Prototype& proto) {
  const Matrix& p = p_h_t.value();
  require(p.rows() == p_g_t.rows(), "cgi_loss: batch sizes differ");
  require(p.cols() == proto.task_classes(), "cgi_loss: task head width differs from prototype");
  CgiState state;
  state.p_tilde = transform_probability(p_g_t, proto);
  state.beta.resize(p.rows());
  for (std::size_t j = 0; j < p.rows(); ++j)
    state.beta[j] = beta_factor(state.p_tilde.row(j), p.row(j));
  state.p_mixed = mixed_probability(state.p_tilde, p);
  const Var loss = calibrated_penalty(p_h_t, state.p_tilde, state.beta, PenaltyVariant::cgi);
  return {loss, std::move(state)};
}

double cgi_loss(const Matrix& p_h_t, const Matrix& p_g_t, const Prototype& proto) {
  Tape tape;
  return cgi_loss(tape.constant(p_h_t), p_g_t, proto).loss.value().item();
}

Matrix cgi_gradient_reference(const Matrix& p_h, const Matrix& p_tilde,
                              std::span<const double> beta) {
  require_rows_match(p_h, p_tilde, "cgi_gradient_reference");
  require(beta.size() == p_h.rows(), "cgi_gradient_reference: one beta per row required");
  Matrix g(p_h.rows(), p_h.cols());
  for (std::size_t j = 0; j < p_h.rows(); ++j)
    for (std::size_t c = 0; c < p_h.cols(); ++c) {
      const double mixed = 0.5 * (p_h(j, c) + p_tilde(j, c));
      g(j, c) = -(2.0 * beta[j] * p_h(j, c) + (1.0 - beta[j]) * mixed);
    }
  return g;
}

Matrix cgi_gradient_printed(const Matrix& p_h, const Matrix& p_tilde,
                            std::span<const double> beta) {
  require_rows_match(p_h, p_tilde, "cgi_gradient_printed");
  require(beta.size() == p_h.rows(), "cgi_gradient_printed: one beta per row required");
  Matrix g(p_h.rows(), p_h.cols());
  for (std::size_t j = 0; j < p_h.rows(); ++j)
    for (std::size_t c = 0; c < p_h.cols(); ++c)
      g(j, c) = -((1.0 + beta[j]) * p_h(j, c) + (1.0 - beta[j]) * p_tilde(j, c));
  return g;
}

Var classification_loss(Var p_h_s, std::span<const int> labels, double smoothing,
                        std::optional<double> focal_gamma) {
  const Matrix& p = p_h_s.value();
  const std::size_t classes = p.cols();
  check_labels(labels, p.rows(), classes, "classification_loss");
  require(smoothing >= 0.0 && smoothing < 1.0, "classification_loss: smoothing must be in [0, 1)");
  require(!p.empty(), "classification_loss: empty batch");
  Tape& tape = p_h_s.tape();

  if (focal_gamma) {
    require(*focal_gamma >= 0.0, "classification_loss: focal gamma must be non-negative");
    const Var p_true = row_sum(elementwise_mul(p_h_s, tape.constant(one_hot(labels, static_cast<int>(classes)))));
    const Var ce = scalar_affine(elementwise_log(clamp_min(p_true)), -1.0, 0.0);
    const Var miss = clamp_min(scalar_affine(p_true, -1.0, 1.0));
    const Var weight = elementwise_exp(scalar_affine(elementwise_log(miss), *focal_gamma, 0.0));
    return mean(elementwise_mul(weight, ce));
  }

  require(smoothing == 0.0 || classes >= 2, "classification_loss: smoothing needs two classes");
  const double off = classes > 1 ? smoothing / static_cast<double>(classes - 1) : 0.0;
  Matrix targets(p.rows(), classes, off);
  for (std::size_t i = 0; i < p.rows(); ++i)
    targets(i, static_cast<std::size_t>(labels[i])) = 1.0 - smoothing;
  const Var log_p = elementwise_log(clamp_min(p_h_s));
  return mean(scalar_affine(row_sum(elementwise_mul(tape.constant(std::move(targets)), log_p)),
                            -1.0, 0.0));
}

double classification_loss(const Matrix& p_h_s, std::span<const int> labels, double smoothing,
                           std::optional<double> focal_gamma) {
  Tape tape;
  return classification_loss(tape.constant(p_h_s), labels, smoothing, focal_gamma).value().item();
}

}  // namespace bipc::loss
