#include "bipc/trainer.hpp"

#include <algorithm>
#include <cmath>

namespace bipc::train {

namespace {

using model::BoundParams;
using model::Group;
using model::ParamGroups;

struct Objective {
  BoundParams bound;
  Var cls;
  Var cpa;
  Var cgi;
};

Matrix mask_matrix(std::size_t rows, std::span<const double> keep) {
  Matrix m(rows, keep.size());
  for (std::size_t j = 0; j < rows; ++j)
    for (std::size_t c = 0; c < keep.size(); ++c) m(j, c) = keep[c];
  return m;
}

Objective build_objective(Tape& tape, const ParamGroups& params, const StepBatch& batch,
                          const model::Prototype& proto, const TrainConfig& config,
                          std::span<const double> keep) {
  require(batch.source_inputs.rows() > 0 && batch.target_inputs.rows() > 0,
          "train_step: batches must be non-empty");
  Objective o{model::bind(tape, params), {}, {}, {}};
  const Var f_s = model::feature_extract(o.bound.theta, tape.constant(batch.source_inputs));
  const Var f_t = model::feature_extract(o.bound.theta, tape.constant(batch.target_inputs));
  const Var p_h_s = model::head_forward(o.bound.theta_h, f_s);
  const Var p_g_s = model::head_forward(o.bound.theta_g, f_s);
  const Var p_g_t = model::head_forward(o.bound.theta_g, f_t);
  Var p_h_t = model::head_forward(o.bound.theta_h,
                                  config.cgi_updates_backbone ? f_t : tape.detach(f_t));
  if (!keep.empty()) {
    require(keep.size() == p_h_t.value().cols(), "train_step: mask width differs from c1");
    p_h_t = elementwise_mul(p_h_t, tape.constant(mask_matrix(p_h_t.value().rows(), keep)));
  }

  o.cls = loss::classification_loss(p_h_s, batch.source_labels, config.smoothing,
                                    config.focal_gamma);

  const Matrix y_s = loss::one_hot(batch.source_labels, static_cast<int>(p_h_s.value().cols()));
  const auto weights = loss::calibration_weights(y_s, p_h_t.value());
  o.cpa = loss::cpa_loss(p_g_s, p_g_t, weights.alpha_st, batch.source_labels, proto);

  const Matrix p_tilde = loss::transform_probability(p_g_t.value(), proto);
  std::vector<double> beta(p_tilde.rows());
  for (std::size_t j = 0; j < beta.size(); ++j)
    beta[j] = beta_variant_eval(config.beta_variant, p_h_t.value().row(j), p_tilde.row(j));
  o.cgi = loss::calibrated_penalty(p_h_t, p_tilde, beta, config.penalty_variant);
  return o;
}

std::vector<Matrix> grads_of(const Gradients& g, const std::vector<Var>& vars) {
  std::vector<Matrix> out;
  out.reserve(vars.size());
  for (Var v : vars) out.push_back(g.of(v));
  return out;
}

GroupGradients group_gradients(const Tape& tape, Var loss, const BoundParams& b) {
  const Gradients g = tape.backward(loss);
  return {grads_of(g, b.theta), grads_of(g, b.theta_g), grads_of(g, b.theta_h)};
}

void check_finite(double v, const char* name) {
  if (!std::isfinite(v)) throw TrainingDiverged(name, -1);
}

struct Cycler {
  std::size_t n;
  Rng* rng;
  std::vector<std::size_t> order;
  std::size_t pos = 0;

  std::vector<std::size_t> take(std::size_t k) {
    std::vector<std::size_t> out;
    out.reserve(k);
    while (out.size() < k) {
      if (pos == order.size()) {
        order = rng->permutation(n);
        pos = 0;
      }
      out.push_back(order[pos++]);
    }
    return out;
  }
};

}  // namespace

void validate(const ScheduleConfig& s) {
  require(s.eta0 > 0.0, "schedule.eta0 must be positive");
  require(s.tau >= 0.0, "schedule.tau must be non-negative");
  require(s.upsilon > 0.0, "schedule.upsilon must be positive");
  require(s.delta > 0.0, "schedule.delta must be positive");
  require(s.head_lr_multiplier > 0.0, "schedule.head_lr_multiplier must be positive");
  require(s.lambda1 >= 0.0 && s.lambda2_a >= 0.0 && s.lambda3_a >= 0.0,
          "schedule.lambda1, schedule.lambda2_a and schedule.lambda3_a must be non-negative");
}

void validate(const TrainConfig& t) {
  require(t.epochs >= 1, "train.epochs must be at least 1");
  require(t.batch_size >= 1, "train.batch_size must be at least 1");
  require(t.smoothing >= 0.0 && t.smoothing < 1.0, "train.smoothing must be in [0, 1)");
  require(!t.focal_gamma || *t.focal_gamma >= 0.0, "train.focal_gamma must be non-negative");
  require(t.momentum >= 0.0 && t.momentum < 1.0, "train.momentum must be in [0, 1)");
  require(t.weight_decay >= 0.0, "train.weight_decay must be non-negative");
  require(!t.pda || t.pda->threshold >= 0, "train.pda_threshold must be non-negative");
}

double lr_schedule(double eta0, double tau, double upsilon, double rho) {
  require(rho >= 0.0, "lr_schedule: rho must be non-negative");
  return eta0 / std::pow(1.0 + tau * rho, upsilon);
}

double lambda_schedule(double a, double delta, double rho) {
  return a * (2.0 / (1.0 + std::exp(-delta * rho)) - 1.0);
}

double printed_lambda_schedule(double a, double delta, double rho) {
  return 2.0 * a / std::exp(-delta * rho) - 1.0;
}

StepWeights step_weights(const ScheduleConfig& s, std::size_t iteration,
                         std::size_t total_iterations) {
  require(total_iterations > 0, "step_weights: no iterations");
  const double progress = static_cast<double>(iteration) / static_cast<double>(total_iterations);
  const auto ramp = s.printed_lambda ? printed_lambda_schedule : lambda_schedule;
  StepWeights w;
  w.lambda1 = s.lambda1;
  w.lambda2 = ramp(s.lambda2_a, s.delta, progress);
  w.lambda3 = ramp(s.lambda3_a, s.delta, progress);
  w.eta = lr_schedule(s.eta0, s.tau, s.upsilon, static_cast<double>(iteration));
  w.head_eta = w.eta * s.head_lr_multiplier;
  return w;
}

Optimizers make_optimizers(const TrainConfig& config) {
  const SgdState base{config.momentum, config.weight_decay, {}};
  return {base, base, base};
}

std::vector<double> pda_keep(std::span<const int> counts, int threshold) {
  require(threshold >= 0, "pda: threshold must be non-negative");
  std::vector<double> keep(counts.size());
  bool any = false;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    keep[c] = counts[c] >= threshold ? 1.0 : 0.0;
    any = any || keep[c] != 0.0;
  }
  if (!any)
    throw ContractViolation("pda: every class falls below threshold " + std::to_string(threshold) +
                            "; lower train.pda_threshold");
  return keep;
}

std::vector<double> pda_mask(std::span<const double> p_h_row, std::span<const int> counts,
                             int threshold) {
  require(p_h_row.size() == counts.size(), "pda_mask: length mismatch");
  auto out = pda_keep(counts, threshold);
  for (std::size_t c = 0; c < out.size(); ++c) out[c] *= p_h_row[c];
  return out;
}

std::vector<int> pda_category_counts(const Matrix& p_h_t, int classes) {
  require(classes > 0, "pda_category_counts: class count must be positive");
  require(p_h_t.rows() == 0 || p_h_t.cols() == static_cast<std::size_t>(classes),
          "pda_category_counts: width differs from class count");
  std::vector<int> counts(static_cast<std::size_t>(classes), 0);
  for (int y : row_argmax(p_h_t)) ++counts[static_cast<std::size_t>(y)];
  return counts;
}

double beta_variant_eval(loss::BetaVariant variant, std::span<const double> p_h_row,
                         std::span<const double> p_tilde_row) {
  switch (variant) {
    case loss::BetaVariant::constant_half: return 0.5;
    case loss::BetaVariant::exp_neg_entropy: return std::exp(-loss::entropy(p_h_row));
    case loss::BetaVariant::max_prob: return *std::max_element(p_h_row.begin(), p_h_row.end());
    case loss::BetaVariant::exp_neg_kl: return loss::beta_factor(p_tilde_row, p_h_row);
  }
  throw ContractViolation("beta_variant_eval: unknown variant");
}

StepLosses train_step(ParamGroups& params, Optimizers& opt, const StepBatch& batch,
                      const model::Prototype& proto, const StepWeights& w,
                      const TrainConfig& config, std::span<const double> keep) {
  Tape tape;
  const Objective o = build_objective(tape, params, batch, proto, config, keep);
  const StepLosses losses{o.cls.value().item(), o.cpa.value().item(), o.cgi.value().item()};
  check_finite(losses.cls, "l_cls");
  check_finite(losses.cpa, "l_cpa");
  check_finite(losses.cgi, "l_cgi");

  std::optional<Var> objective;
  for (const auto& [term, weight] : {std::pair{o.cls, w.lambda1}, std::pair{o.cpa, w.lambda2},
                                     std::pair{o.cgi, w.lambda3}}) {
    if (weight == 0.0) continue;
    const Var scaled = scalar_affine(term, weight, 0.0);
    objective = objective ? add(*objective, scaled) : scaled;
  }
  if (!objective) return losses;
  const Gradients g = tape.backward(*objective);

  const bool cgi_on = w.lambda3 != 0.0;
  const bool update_theta =
      w.lambda1 != 0.0 || w.lambda2 != 0.0 || (config.cgi_updates_backbone && cgi_on);
  const bool update_theta_h = w.lambda1 != 0.0 || cgi_on;
  const bool update_theta_g = w.lambda2 != 0.0;

  // Gradients are gathered before any update so a divergence leaves every
  // group untouched.
  const auto g_theta = grads_of(g, o.bound.theta);
  const auto g_theta_g = grads_of(g, o.bound.theta_g);
  const auto g_theta_h = grads_of(g, o.bound.theta_h);
  for (const auto* gs : {&g_theta, &g_theta_g, &g_theta_h})
    for (const auto& m : *gs)
      if (!all_finite(m)) throw TrainingDiverged("gradient", -1);

  if (update_theta) sgd_step(params.theta, g_theta, opt.theta, w.eta);
  if (update_theta_g) sgd_step(params.theta_g, g_theta_g, opt.theta_g, w.eta);
  if (update_theta_h) sgd_step(params.theta_h, g_theta_h, opt.theta_h, w.head_eta);
  return losses;
}

GradientReport inspect_gradients(const ParamGroups& params, const StepBatch& batch,
                                 const model::Prototype& proto, const TrainConfig& config) {
  Tape tape;
  const Objective o = build_objective(tape, params, batch, proto, config, {});
  return {group_gradients(tape, o.cls, o.bound), group_gradients(tape, o.cpa, o.bound),
          group_gradients(tape, o.cgi, o.bound)};
}

std::vector<int> predict(const ParamGroups& params, const Matrix& inputs,
                         std::span<const double> keep) {
  Matrix p = model::head_forward(params.theta_h, model::feature_extract(params.theta, inputs));
  if (!keep.empty()) {
    require(keep.size() == p.cols(), "predict: mask width differs from c1");
    for (std::size_t j = 0; j < p.rows(); ++j)
      for (std::size_t c = 0; c < p.cols(); ++c) p(j, c) *= keep[c];
  }
  return row_argmax(p);
}

TrainResult train(const ParamGroups& pretrained, const data::LabeledSet& source,
                  const data::UnlabeledSet& target, const data::SealedLabels& target_labels,
                  const ScheduleConfig& schedule, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  validate(schedule);
  validate(config);
  require(source.size() > 0, "train: empty source domain");
  require(target.size() > 0, "train: empty target domain");
  require(target_labels.size() == target.size(), "train: target label count differs");
  require(source.class_count == target.class_count, "train: domains disagree on class count");
  const int classes = source.class_count;

  Rng split_rng = stream(config.seed, "split");
  Rng batch_rng = stream(config.seed, "batch");
  auto [proto_half, train_half] = model::split_source(source, split_rng);

  ParamGroups params = pretrained;
  const Matrix p_g_val = model::head_forward(
      params.theta_g, model::feature_extract(params.theta, proto_half.inputs));
  TrainResult result{{}, {}, model::learn_prototype(p_g_val, proto_half.labels, classes)};

  Optimizers opt = make_optimizers(config);
  const std::size_t batch = static_cast<std::size_t>(config.batch_size);
  const bool source_longer = train_half.size() >= target.size();
  const std::size_t n_long = source_longer ? train_half.size() : target.size();
  const std::size_t n_short = source_longer ? target.size() : train_half.size();
  const std::size_t steps_per_epoch = (n_long + batch - 1) / batch;
  const std::size_t total = steps_per_epoch * static_cast<std::size_t>(config.epochs);
  Cycler shorter{n_short, &batch_rng, {}, 0};

  std::vector<double> keep;
  std::size_t iteration = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    if (config.pda) {
      const Matrix p_h_t = model::head_forward(
          params.theta_h, model::feature_extract(params.theta, target.inputs));
      rec.pda_counts = pda_category_counts(p_h_t, classes);
      keep = pda_keep(rec.pda_counts, config.pda->threshold);
    }

    const auto order = batch_rng.permutation(n_long);
    StepWeights w;
    for (std::size_t start = 0; start < n_long; start += batch, ++iteration) {
      const std::vector<std::size_t> long_idx(
          order.begin() + static_cast<long>(start),
          order.begin() + static_cast<long>(std::min(n_long, start + batch)));
      const auto short_idx = shorter.take(long_idx.size());
      const auto& s_idx = source_longer ? long_idx : short_idx;
      const auto& t_idx = source_longer ? short_idx : long_idx;

      StepBatch b;
      b.source_inputs = gather_rows(train_half.inputs, s_idx);
      for (std::size_t i : s_idx) b.source_labels.push_back(train_half.labels[i]);
      b.target_inputs = gather_rows(target.inputs, t_idx);

      w = step_weights(schedule, iteration, total);
      StepLosses l;
      try {
        l = train_step(params, opt, b, result.prototype, w, config, keep);
      } catch (const TrainingDiverged& e) {
        throw TrainingDiverged(e.loss(), epoch);
      }
      rec.l_cls += l.cls;
      rec.l_cpa += l.cpa;
      rec.l_cgi += l.cgi;
    }
    const double steps = static_cast<double>(steps_per_epoch);
    rec.l_cls /= steps;
    rec.l_cpa /= steps;
    rec.l_cgi /= steps;
    rec.lambda2 = w.lambda2;
    rec.lambda3 = w.lambda3;
    rec.eta = w.eta;
    rec.target_acc = data::sealed_accuracy(predict(params, target.inputs, keep), target_labels);
    result.report.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }

  result.report.final_target_acc = result.report.epochs.back().target_acc;
  result.report.final_distances =
      metrics::fig1_analog(params, train_half.inputs, target.inputs, config.seed);
  result.params = std::move(params);
  return result;
}

}  // namespace bipc::train
