#pragma once

// Adaptation loop: source classification, probability alignment in the
// pretrained head's space, and calibrated pseudo-label learning for the task
// head, with per-group learning rates and ramped loss weights.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "bipc/data.hpp"
#include "bipc/losses.hpp"
#include "bipc/metrics.hpp"
#include "bipc/model.hpp"
#include "bipc/sgd.hpp"

namespace bipc::train {

struct ScheduleConfig {
  double eta0 = 0.003;
  double tau = 3e-4;
  double upsilon = 0.75;
  double head_lr_multiplier = 10.0;
  double lambda1 = 1.0;
  double lambda2_a = 1.0;
  double lambda3_a = 0.25;
  double delta = 10.0;
  bool printed_lambda = false;  // use the unbounded printed ramp instead of the logistic one

  bool operator==(const ScheduleConfig&) const = default;
};

struct PdaConfig {
  int threshold = 14;
  bool operator==(const PdaConfig&) const = default;
};

struct TrainConfig {
  int epochs = 20;
  int batch_size = 32;
  std::uint64_t seed = 0;
  bool cgi_updates_backbone = false;
  loss::BetaVariant beta_variant = loss::BetaVariant::exp_neg_kl;
  loss::PenaltyVariant penalty_variant = loss::PenaltyVariant::cgi;
  std::optional<PdaConfig> pda;
  double smoothing = 0.1;
  std::optional<double> focal_gamma;
  double momentum = 0.9;
  double weight_decay = 5e-4;

  bool operator==(const TrainConfig&) const = default;
};

void validate(const ScheduleConfig& s);
void validate(const TrainConfig& t);

/// eta0 / (1 + tau * rho)^upsilon, rho = global iteration index.
double lr_schedule(double eta0, double tau, double upsilon, double rho);
/// a * (2 / (1 + exp(-delta * rho)) - 1), rho = progress in [0, 1].
double lambda_schedule(double a, double delta, double rho);
/// 2a / exp(-delta * rho) - 1, the unbounded form kept for comparison.
double printed_lambda_schedule(double a, double delta, double rho);

struct StepWeights {
  double lambda1 = 1.0;
  double lambda2 = 0.0;
  double lambda3 = 0.0;
  double eta = 0.0;       // backbone and pretrained head
  double head_eta = 0.0;  // task head
};

/// Weights at global iteration `iteration` out of `total_iterations`.
StepWeights step_weights(const ScheduleConfig& s, std::size_t iteration,
                         std::size_t total_iterations);

struct StepLosses {
  double cls = 0.0;
  double cpa = 0.0;
  double cgi = 0.0;
};

struct Optimizers {
  SgdState theta;
  SgdState theta_g;
  SgdState theta_h;
};

Optimizers make_optimizers(const TrainConfig& config);

/// Source batch (labeled) and target batch (inputs only).
struct StepBatch {
  Matrix source_inputs;
  std::vector<int> source_labels;
  Matrix target_inputs;
};

/// 0/1 keep-mask over classes. Throws ContractViolation when every class
/// would be masked.
std::vector<double> pda_keep(std::span<const int> counts, int threshold);
/// p with entries of classes whose count is below the threshold set to 0.
std::vector<double> pda_mask(std::span<const double> p_h_row, std::span<const int> counts,
                             int threshold);
/// Number of rows whose argmax is each class.
std::vector<int> pda_category_counts(const Matrix& p_h_t, int classes);

double beta_variant_eval(loss::BetaVariant variant, std::span<const double> p_h_row,
                         std::span<const double> p_tilde_row);

/// One update of all three groups from a single backward pass of
/// lambda1 L_cls + lambda2 L_cpa + lambda3 L_cgi. `keep` is the PDA class
/// mask (empty outside PDA). A group is skipped when none of the weights on
/// its losses is nonzero. Throws TrainingDiverged naming the loss.
StepLosses train_step(model::ParamGroups& params, Optimizers& opt, const StepBatch& batch,
                      const model::Prototype& proto, const StepWeights& w,
                      const TrainConfig& config, std::span<const double> keep = {});

/// Gradient of each loss separately w.r.t. every group.
struct GroupGradients {
  std::vector<Matrix> theta;
  std::vector<Matrix> theta_g;
  std::vector<Matrix> theta_h;
};

struct GradientReport {
  GroupGradients cls;
  GroupGradients cpa;
  GroupGradients cgi;
};

GradientReport inspect_gradients(const model::ParamGroups& params, const StepBatch& batch,
                                 const model::Prototype& proto, const TrainConfig& config);

struct EpochRecord {
  int epoch = 0;
  double target_acc = 0.0;
  double l_cls = 0.0;
  double l_cpa = 0.0;
  double l_cgi = 0.0;
  double lambda2 = 0.0;
  double lambda3 = 0.0;
  double eta = 0.0;
  std::vector<int> pda_counts;  // empty outside PDA
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  double final_target_acc = 0.0;
  metrics::Fig1Distances final_distances;
};

struct TrainResult {
  TrainReport report;
  model::ParamGroups params;
  model::Prototype prototype;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Splits the source 1:1, learns the prototype on one half and adapts on the
/// other. Target labels are used only to score each epoch.
TrainResult train(const model::ParamGroups& pretrained, const data::LabeledSet& source,
                  const data::UnlabeledSet& target, const data::SealedLabels& target_labels,
                  const ScheduleConfig& schedule, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

/// Class predictions on the target set; masked by `keep` when it is non-empty.
std::vector<int> predict(const model::ParamGroups& params, const Matrix& inputs,
                         std::span<const double> keep = {});

}  // namespace bipc::train
