#include "bipc/model.hpp"

#include <algorithm>
#include <cmath>

#include "bipc/losses.hpp"
#include "bipc/sgd.hpp"

namespace bipc::model {

namespace {

Matrix normal_matrix(std::size_t rows, std::size_t cols, double stddev, Rng& rng) {
  Matrix m(rows, cols);
  for (double& v : m.values()) v = stddev * rng.normal();
  return m;
}

void check_layers(std::span<const Matrix> layers, const char* what) {
  require(!layers.empty() && layers.size() % 2 == 0,
          std::string(what) + ": expected (weight, bias) pairs");
}

std::vector<int> gather_labels(std::span<const int> labels, std::span<const std::size_t> idx) {
  std::vector<int> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(labels[i]);
  return out;
}

data::LabeledSet subset(const data::LabeledSet& set, std::span<const std::size_t> idx) {
  data::LabeledSet out;
  out.inputs = gather_rows(set.inputs, idx);
  out.labels = gather_labels(set.labels, idx);
  out.class_count = set.class_count;
  out.tag = set.tag;
  return out;
}

double accuracy_of(const Matrix& probs, std::span<const int> labels) {
  if (labels.empty()) return 0.0;
  const auto pred = row_argmax(probs);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hit += pred[i] == labels[i];
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

}  // namespace

const char* group_name(Group g) noexcept {
  switch (g) {
    case Group::theta: return "theta";
    case Group::theta_g: return "theta_g";
    case Group::theta_h: return "theta_h";
  }
  return "?";
}

Group parse_group(const std::string& text) {
  for (auto g : {Group::theta, Group::theta_g, Group::theta_h})
    if (text == group_name(g)) return g;
  throw ContractViolation("unknown parameter group '" + text + "'");
}

std::vector<Matrix>& ParamGroups::group(Group g) {
  switch (g) {
    case Group::theta: return theta;
    case Group::theta_g: return theta_g;
    case Group::theta_h: break;
  }
  return theta_h;
}

const std::vector<Matrix>& ParamGroups::group(Group g) const {
  return const_cast<ParamGroups*>(this)->group(g);
}

const std::vector<Var>& BoundParams::group(Group g) const {
  switch (g) {
    case Group::theta: return theta;
    case Group::theta_g: return theta_g;
    case Group::theta_h: break;
  }
  return theta_h;
}

std::vector<Matrix> init_head(int feature_dim, int classes, Rng& rng) {
  require(feature_dim > 0 && classes > 0, "init_head: dimensions must be positive");
  const auto f = static_cast<std::size_t>(feature_dim);
  const auto c = static_cast<std::size_t>(classes);
  std::vector<Matrix> head;
  head.push_back(normal_matrix(f, c, std::sqrt(1.0 / feature_dim), rng));
  head.emplace_back(1, c);
  return head;
}

ParamGroups init_params(const Architecture& arch, Rng& rng) {
  require(arch.input_dim > 0 && arch.feature_dim > 0, "init_params: dimensions must be positive");
  require(!arch.hidden.empty(), "init_params: at least one hidden layer is required");
  ParamGroups p;
  std::vector<int> widths{arch.input_dim};
  widths.insert(widths.end(), arch.hidden.begin(), arch.hidden.end());
  widths.push_back(arch.feature_dim);
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    require(widths[l + 1] > 0, "init_params: layer widths must be positive");
    const auto in = static_cast<std::size_t>(widths[l]);
    const auto out = static_cast<std::size_t>(widths[l + 1]);
    p.theta.push_back(normal_matrix(in, out, std::sqrt(2.0 / widths[l]), rng));
    p.theta.emplace_back(1, out);
  }
  p.theta_g = init_head(arch.feature_dim, arch.pretrain_classes, rng);
  p.theta_h = init_head(arch.feature_dim, arch.task_classes, rng);
  return p;
}

BoundParams bind(Tape& tape, const ParamGroups& params) {
  BoundParams b;
  for (const auto& m : params.theta) b.theta.push_back(tape.parameter(m));
  for (const auto& m : params.theta_g) b.theta_g.push_back(tape.parameter(m));
  for (const auto& m : params.theta_h) b.theta_h.push_back(tape.parameter(m));
  return b;
}

Var feature_extract(std::span<const Var> theta, Var x) {
  require(!theta.empty() && theta.size() % 2 == 0, "feature_extract: expected (weight, bias) pairs");
  require(x.value().cols() == theta[0].value().rows(), "feature_extract: input width mismatch");
  Var h = x;
  for (std::size_t l = 0; l < theta.size(); l += 2) h = relu(add_bias(matmul(h, theta[l]), theta[l + 1]));
  return h;
}

Var head_forward(std::span<const Var> head, Var features) {
  require(head.size() == 2, "head_forward: a head is one dense layer");
  require(features.value().cols() == head[0].value().rows(), "head_forward: feature width mismatch");
  return row_softmax(add_bias(matmul(features, head[0]), head[1]));
}

Matrix feature_extract(std::span<const Matrix> theta, const Matrix& x) {
  check_layers(theta, "feature_extract");
  Tape tape;
  std::vector<Var> vars;
  for (const auto& m : theta) vars.push_back(tape.constant(m));
  return feature_extract(vars, tape.constant(x)).value();
}

Matrix head_forward(std::span<const Matrix> head, const Matrix& features) {
  check_layers(head, "head_forward");
  Tape tape;
  std::vector<Var> vars;
  for (const auto& m : head) vars.push_back(tape.constant(m));
  return head_forward(vars, tape.constant(features)).value();
}

PretrainResult pretrain(ParamGroups init, const data::LabeledSet& train,
                        const data::LabeledSet& heldout, const PretrainConfig& config, Rng& rng) {
  require(config.epochs >= 0, "pretrain: epochs must be non-negative");
  require(config.batch_size >= 1, "pretrain: batch_size must be positive");
  require(config.lr > 0.0, "pretrain: lr must be positive");
  require(train.size() > 0, "pretrain: empty training set");
  require(train.inputs.cols() == init.theta.front().rows(), "pretrain: input width mismatch");
  require(static_cast<std::size_t>(train.class_count) == init.theta_g.front().cols(),
          "pretrain: class count differs from the pretrained head width");

  SgdState backbone{config.momentum, config.weight_decay, {}};
  SgdState head{config.momentum, config.weight_decay, {}};
  const auto batch = static_cast<std::size_t>(config.batch_size);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto order = rng.permutation(train.size());
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::span<const std::size_t> idx(order.data() + start,
                                             std::min(batch, order.size() - start));
      const Matrix x = gather_rows(train.inputs, idx);
      const auto y = gather_labels(train.labels, idx);

      Tape tape;
      const BoundParams b = bind(tape, init);
      const Var probs = head_forward(b.theta_g, feature_extract(b.theta, tape.constant(x)));
      const Var loss = loss::classification_loss(probs, y, 0.0);
      if (!std::isfinite(loss.value().item())) throw TrainingDiverged("pretrain loss", epoch);
      const Gradients g = tape.backward(loss);

      std::vector<Matrix> grads;
      for (Var v : b.theta) grads.push_back(g.of(v));
      try {
        sgd_step(init.theta, grads, backbone, config.lr);
        grads.clear();
        for (Var v : b.theta_g) grads.push_back(g.of(v));
        sgd_step(init.theta_g, grads, head, config.lr);
      } catch (const TrainingDiverged&) {
        throw TrainingDiverged("pretrain gradient", epoch);
      }
    }
  }

  PretrainResult result;
  if (heldout.size() > 0)
    result.heldout_accuracy = accuracy_of(
        head_forward(init.theta_g, feature_extract(init.theta, heldout.inputs)), heldout.labels);
  result.params = std::move(init);
  return result;
}

std::pair<data::LabeledSet, data::LabeledSet> split_source(const data::LabeledSet& source,
                                                           Rng& rng) {
  require(source.class_count > 0, "split_source: class count must be positive");
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(source.class_count));
  for (std::size_t i = 0; i < source.size(); ++i) {
    const int y = source.labels[i];
    require(y >= 0 && y < source.class_count, "split_source: label out of range");
    by_class[static_cast<std::size_t>(y)].push_back(i);
  }
  std::vector<std::size_t> proto_idx;
  std::vector<std::size_t> train_idx;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& members = by_class[c];
    if (members.size() < 2)
      throw ContractViolation("split_source: class " + std::to_string(c) +
                              " needs at least 2 samples, has " + std::to_string(members.size()));
    rng.shuffle(members);
    const std::size_t half = members.size() / 2;
    proto_idx.insert(proto_idx.end(), members.begin(), members.begin() + static_cast<long>(half));
    train_idx.insert(train_idx.end(), members.begin() + static_cast<long>(half), members.end());
  }
  std::sort(proto_idx.begin(), proto_idx.end());
  std::sort(train_idx.begin(), train_idx.end());
  return {subset(source, proto_idx), subset(source, train_idx)};
}

// ---- prototype --------------------------------------------------------------

Prototype::Prototype(Matrix rows) : m_(std::move(rows)) {
  require(!m_.empty(), "Prototype: empty matrix");
  for (std::size_t c = 0; c < m_.rows(); ++c) {
    double sum = 0.0;
    for (double v : m_.row(c)) {
      require(std::isfinite(v) && v >= kEps, "Prototype: entries must be finite and >= kEps");
      sum += v;
    }
    require(std::abs(sum - 1.0) <= 1e-9, "Prototype: rows must sum to 1");
  }
}

Prototype Prototype::from_unnormalized(Matrix rows) {
  for (std::size_t c = 0; c < rows.rows(); ++c) {
    auto r = rows.row(c);
    double sum = 0.0;
    for (double& v : r) {
      require(std::isfinite(v), "Prototype: non-finite entry");
      v = std::max(v, kEps);
      sum += v;
    }
    for (double& v : r) v = std::max(v / sum, kEps);
  }
  return Prototype(std::move(rows));
}

Prototype ClassMeanPrototype::estimate(const Matrix& p_g, std::span<const int> labels,
                                       int task_classes) const {
  require(task_classes > 0, "learn_prototype: class count must be positive");
  require(labels.size() == p_g.rows(), "learn_prototype: one label per row required");
  std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(task_classes));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    require(labels[i] >= 0 && labels[i] < task_classes, "learn_prototype: label out of range");
    members[static_cast<std::size_t>(labels[i])].push_back(i);
  }
  Matrix rows(members.size(), p_g.cols());
  for (std::size_t c = 0; c < members.size(); ++c) {
    auto& idx = members[c];
    if (idx.empty()) throw MissingClass(static_cast<int>(c));
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      const auto ra = p_g.row(a);
      const auto rb = p_g.row(b);
      return std::lexicographical_compare(ra.begin(), ra.end(), rb.begin(), rb.end());
    });
    auto out = rows.row(c);
    for (std::size_t i : idx)
      for (std::size_t k = 0; k < out.size(); ++k) out[k] += p_g(i, k);
    for (double& v : out) v /= static_cast<double>(idx.size());
  }
  return Prototype::from_unnormalized(std::move(rows));
}

Prototype learn_prototype(const Matrix& p_g_val, std::span<const int> labels, int task_classes,
                          const PrototypeEstimator& estimator) {
  return estimator.estimate(p_g_val, labels, task_classes);
}

}  // namespace bipc::model
