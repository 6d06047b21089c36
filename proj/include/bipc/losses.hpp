#pragma once

// Loss functions and calibration quantities for probability-space adaptation.
//
// Losses are built on a Tape so gradients come from the generic reverse pass.
// Every quantity the method treats as a constant (pseudo-labels, calibration
// weights, transformed probabilities, beta) is passed in as a plain Matrix and
// enters the graph as a constant node.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bipc/matrix.hpp"
#include "bipc/prototype.hpp"
#include "bipc/tape.hpp"

namespace bipc::loss {

using model::Prototype;

struct PseudoLabels {
  Matrix one_hot;            // n_t x c1
  std::vector<int> classes;  // argmax per row
};

struct CalibrationWeights {
  Matrix alpha_s;   // n_s x c1
  Matrix alpha_t;   // n_t x c1
  Matrix alpha_st;  // n_s x n_t, alpha_st(i, j) = <alpha_s[i], alpha_t[j]>
};

struct CgiState {
  Matrix p_tilde;           // n_t x c1
  std::vector<double> beta; // n_t, in (0, 1]
  Matrix p_mixed;           // n_t x c1
};

enum class BetaVariant { constant_half, exp_neg_entropy, max_prob, exp_neg_kl };
enum class PenaltyVariant { ge, cge, gi, cgi_noreg, cgi };

const char* name(BetaVariant v) noexcept;
const char* name(PenaltyVariant v) noexcept;
BetaVariant parse_beta_variant(const std::string& text);
PenaltyVariant parse_penalty_variant(const std::string& text);

// ---- scalar distribution utilities (arguments clamped at kEps inside logs) --

double kl_divergence(std::span<const double> p, std::span<const double> q);
double entropy(std::span<const double> p);
/// d(p, q) = -0.5 * sum_c (p_c + q_c) log(p_c + q_c). Symmetric, may be negative.
double pair_distance(std::span<const double> p, std::span<const double> q);
/// Jensen-Shannon divergence via the midpoint form 0.5 KL(p||m) + 0.5 KL(q||m).
double js_divergence(std::span<const double> p, std::span<const double> q);

// ---- calibration weights -------------------------------------------------

Matrix one_hot(std::span<const int> labels, int classes);
/// Row i = y_s[i] / column sums of y_s. Columns of absent classes stay zero.
Matrix source_weights(const Matrix& y_s);
/// One-hot argmax per row, ties to the lowest class index.
PseudoLabels pseudo_labels(const Matrix& p_h_t);
/// Row j = pseudo[j] * p_h_t[j] / column sums of p_h_t (zero where the
/// column sum vanishes).
Matrix target_weights(const Matrix& p_h_t, const PseudoLabels& pseudo);
Matrix calibration_matrix(const Matrix& alpha_s, const Matrix& alpha_t);
CalibrationWeights calibration_weights(const Matrix& y_s, const Matrix& p_h_t);

// ---- calibrated probability alignment -------------------------------------

/// sum_ij alpha_st(i, j) * d(p_g_s[i], p_g_t[j]).
Var cpa_alignment(Var p_g_s, Var p_g_t, const Matrix& alpha_st);
/// sum_i KL(M_{y_i} || p_g_s[i]).
Var prototype_regularizer(Var p_g_s, std::span<const int> labels, const Prototype& proto);
/// Alignment term plus prototype regulariser.
Var cpa_loss(Var p_g_s, Var p_g_t, const Matrix& alpha_st, std::span<const int> labels,
             const Prototype& proto);

double prototype_regularizer(const Matrix& p_g_s, std::span<const int> labels,
                             const Prototype& proto);
double cpa_loss(const Matrix& p_g_s, const Matrix& p_g_t, const Matrix& alpha_st,
                std::span<const int> labels, const Prototype& proto);

// ---- calibrated Gini impurity ----------------------------------------------

/// sum_j (1 - sum_c p_jc^2)
Var gini_impurity(Var p);
double gini_impurity(const Matrix& p);
/// sum_j -sum_c p_jc log p_jc
Var gibbs_entropy(Var p);

/// p~_jc = softmax_c(-KL(M_c || p_g_t[j]))
Matrix transform_probability(const Matrix& p_g_t, const Prototype& proto);
/// exp(-KL(p~ || p_h))
double beta_factor(std::span<const double> p_tilde, std::span<const double> p_h);
/// 0.5 (p~ + p_h)
Matrix mixed_probability(const Matrix& p_tilde, const Matrix& p_h);

/// Penalty on the task head's target probabilities; p_tilde and beta are
/// constants. For `cgi`: sum_j beta_j GI(p_h_j) + (1 - beta_j) GI(p_m_j).
Var calibrated_penalty(Var p_h_t, const Matrix& p_tilde, std::span<const double> beta,
                       PenaltyVariant variant);

struct CgiResult {
  Var loss;
  CgiState state;
};

/// CGI with beta = exp(-KL(p~ || p_h)) computed from the detached value of p_h_t.
CgiResult cgi_loss(Var p_h_t, const Matrix& p_g_t, const Prototype& proto);
double cgi_loss(const Matrix& p_h_t, const Matrix& p_g_t, const Prototype& proto);

/// Exact derivative of the CGI objective w.r.t. p_h (softmax excluded):
/// row j = -(2 beta_j p_h_j + (1 - beta_j) p_m_j).
Matrix cgi_gradient_reference(const Matrix& p_h, const Matrix& p_tilde,
                              std::span<const double> beta);
/// The closed form -( (1 + beta) p_h + (1 - beta) p~ ); kept for comparison
/// only, it is not the derivative.
Matrix cgi_gradient_printed(const Matrix& p_h, const Matrix& p_tilde,
                            std::span<const double> beta);

// ---- source classification --------------------------------------------------

/// Mean over the batch of cross entropy against smoothed targets (1 - s on the
/// true class, s / (c1 - 1) elsewhere). With `focal_gamma`, each sample's
/// unsmoothed term -log p_true is scaled by (1 - p_true)^gamma instead.
Var classification_loss(Var p_h_s, std::span<const int> labels, double smoothing,
                        std::optional<double> focal_gamma = std::nullopt);
double classification_loss(const Matrix& p_h_s, std::span<const int> labels, double smoothing,
                           std::optional<double> focal_gamma = std::nullopt);

}  // namespace bipc::loss
