#include "bipc/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

namespace bipc::data {

const char* tag_name(DomainTag tag) noexcept {
  switch (tag) {
    case DomainTag::source: return "source";
    case DomainTag::target: return "target";
    case DomainTag::pretrain: return "pretrain";
  }
  return "?";
}

DomainTag parse_tag(const std::string& text) {
  if (text == "source") return DomainTag::source;
  if (text == "target") return DomainTag::target;
  if (text == "pretrain") return DomainTag::pretrain;
  throw ContractViolation("unknown domain tag '" + text + "'");
}

SealedLabels seal(std::vector<int> labels) { return SealedLabels(std::move(labels)); }

double sealed_accuracy(std::span<const int> predictions, const SealedLabels& truth) {
  require(predictions.size() == truth.labels_.size(), "sealed_accuracy: length mismatch");
  require(!predictions.empty(), "sealed_accuracy: empty input");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) hits += predictions[i] == truth.labels_[i];
  return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

void validate(const GeneratorSpec& spec) {
  require(spec.dim >= 2, "generator.dim must be at least 2");
  require(spec.pretrain_classes >= 2, "generator.pretrain_classes must be at least 2");
  require(spec.task_classes >= 2, "generator.task_classes must be at least 2");
  require(spec.task_classes <= spec.pretrain_classes,
          "generator.task_classes must not exceed generator.pretrain_classes");
  require(spec.target_classes >= 0 && spec.target_classes <= spec.task_classes,
          "generator.target_classes must lie in [0, task_classes]");
  require(spec.samples_per_class >= 2, "generator.samples_per_class must be at least 2");
  require(spec.pretrain_samples_per_class >= 2,
          "generator.pretrain_samples_per_class must be at least 2");
  require(spec.heldout_fraction > 0.0 && spec.heldout_fraction < 1.0,
          "generator.heldout_fraction must lie in (0, 1)");
  require(spec.cluster_spread >= 0.0, "generator.cluster_spread must be non-negative");
  require(spec.shift.noise >= 0.0, "generator.shift.noise must be non-negative");
  require(spec.shift.translation.empty() ||
              spec.shift.translation.size() == static_cast<std::size_t>(spec.dim),
          "generator.shift.translation must be empty or have dim entries");
  require(spec.pretrain_rotation_max >= 0.0, "generator.pretrain_rotation_max must be >= 0");
  require(spec.pretrain_translation_max >= 0.0,
          "generator.pretrain_translation_max must be >= 0");
}

Matrix class_centers(const GeneratorSpec& spec) {
  Rng rng = stream(spec.seed, "data.centers");
  Matrix centers(static_cast<std::size_t>(spec.pretrain_classes), static_cast<std::size_t>(spec.dim));
  for (std::size_t c = 0; c < centers.rows(); ++c) {
    double norm = 0.0;
    while (norm < 1e-6) {
      norm = 0.0;
      for (double& v : centers.row(c)) {
        v = rng.normal();
        norm += v * v;
      }
      norm = std::sqrt(norm);
    }
    for (double& v : centers.row(c)) v /= norm;
  }
  return centers;
}

namespace {

void rotate_row(std::span<double> x, double angle) {
  const double cs = std::cos(angle);
  const double sn = std::sin(angle);
  for (std::size_t k = 0; k + 1 < x.size(); k += 2) {
    const double a = x[k];
    const double b = x[k + 1];
    x[k] = cs * a - sn * b;
    x[k + 1] = sn * a + cs * b;
  }
}

/// Draws `per_class` samples around each of the given class centers.
LabeledSet sample_clusters(const Matrix& centers, int classes, int per_class, double spread,
                           DomainTag tag, Rng& rng) {
  LabeledSet set;
  set.class_count = classes;
  set.tag = tag;
  set.inputs = Matrix(static_cast<std::size_t>(classes * per_class), centers.cols());
  set.labels.reserve(set.inputs.rows());
  std::size_t r = 0;
  for (int c = 0; c < classes; ++c)
    for (int k = 0; k < per_class; ++k, ++r) {
      auto row = set.inputs.row(r);
      for (std::size_t d = 0; d < row.size(); ++d)
        row[d] = centers(static_cast<std::size_t>(c), d) + spread * rng.normal();
      set.labels.push_back(c);
    }
  return set;
}

LabeledSet subset(const LabeledSet& set, std::span<const std::size_t> idx) {
  LabeledSet out;
  out.class_count = set.class_count;
  out.tag = set.tag;
  out.inputs = gather_rows(set.inputs, idx);
  out.labels.reserve(idx.size());
  for (std::size_t i : idx) out.labels.push_back(set.labels[i]);
  return out;
}

}  // namespace

void apply_shift(Matrix& inputs, const ShiftSpec& shift, Rng& rng) {
  for (std::size_t r = 0; r < inputs.rows(); ++r) {
    auto row = inputs.row(r);
    rotate_row(row, shift.rotation);
    for (std::size_t d = 0; d < row.size(); ++d) {
      if (!shift.translation.empty()) row[d] += shift.translation[d];
      if (shift.noise > 0.0) row[d] += shift.noise * rng.normal();
    }
  }
}

PretrainTask make_pretrain_task(const GeneratorSpec& spec) {
  validate(spec);
  const Matrix centers = class_centers(spec);
  Rng rng = stream(spec.seed, "data.pretrain");
  LabeledSet all = sample_clusters(centers, spec.pretrain_classes, spec.pretrain_samples_per_class,
                                   spec.cluster_spread, DomainTag::pretrain, rng);

  for (std::size_t r = 0; r < all.inputs.rows(); ++r) {
    auto row = all.inputs.row(r);
    const double angle = spec.pretrain_rotation_max * (2.0 * rng.uniform() - 1.0);
    const double reach = spec.pretrain_translation_max * rng.uniform();
    rotate_row(row, angle);
    if (!spec.shift.translation.empty())
      for (std::size_t d = 0; d < row.size(); ++d) row[d] += reach * spec.shift.translation[d];
  }

  // Stratified held-out split: the first ceil(fraction * n_c) of a shuffled
  // class go to held-out.
  std::vector<std::size_t> train_idx, heldout_idx;
  const auto per = static_cast<std::size_t>(spec.pretrain_samples_per_class);
  const auto n_held = static_cast<std::size_t>(
      std::ceil(spec.heldout_fraction * static_cast<double>(per)));
  for (int c = 0; c < spec.pretrain_classes; ++c) {
    std::vector<std::size_t> idx = rng.permutation(per);
    for (std::size_t k = 0; k < per; ++k)
      (k < n_held ? heldout_idx : train_idx).push_back(static_cast<std::size_t>(c) * per + idx[k]);
  }
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(heldout_idx.begin(), heldout_idx.end());
  return {subset(all, train_idx), subset(all, heldout_idx)};
}

UdaPair make_uda_pair(const GeneratorSpec& spec) {
  validate(spec);
  const Matrix centers = class_centers(spec);

  Rng src_rng = stream(spec.seed, "data.source");
  LabeledSet source = sample_clusters(centers, spec.task_classes, spec.samples_per_class,
                                      spec.cluster_spread, DomainTag::source, src_rng);

  Rng tgt_rng = stream(spec.seed, "data.target");
  LabeledSet target = sample_clusters(centers, spec.effective_target_classes(),
                                      spec.samples_per_class, spec.cluster_spread,
                                      DomainTag::target, tgt_rng);
  target.class_count = spec.task_classes;
  apply_shift(target.inputs, spec.shift, tgt_rng);

  UdaPair pair;
  pair.source = std::move(source);
  pair.target.inputs = std::move(target.inputs);
  pair.target.class_count = spec.task_classes;
  pair.target.tag = DomainTag::target;
  pair.target_labels = seal(std::move(target.labels));
  return pair;
}

namespace {

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_rows(std::ostream& out, const Matrix& x, const std::vector<int>* labels) {
  for (std::size_t r = 0; r < x.rows(); ++r) {
    if (labels) out << (*labels)[r] << ' ';
    for (std::size_t c = 0; c < x.cols(); ++c) {
      if (c) out << ' ';
      out << fmt_double(x(r, c));
    }
    out << '\n';
  }
}

struct Header {
  std::size_t dim = 0;
  int classes = 0;
  std::size_t n = 0;
  DomainTag tag = DomainTag::source;
  bool labeled = false;
};

Header read_header(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ContractViolation("dataset: missing header");
  std::istringstream hs(line);
  std::string magic, tag, kind;
  int version = 0;
  Header h;
  if (!(hs >> magic >> version >> h.dim >> h.classes >> h.n >> tag >> kind) ||
      magic != "bipc-dataset" || version != 1)
    throw ContractViolation("dataset: malformed header '" + line + "'");
  h.tag = parse_tag(tag);
  if (kind != "labeled" && kind != "unlabeled")
    throw ContractViolation("dataset: header kind must be labeled or unlabeled");
  h.labeled = kind == "labeled";
  return h;
}

Matrix read_rows(std::istream& in, const Header& h, std::vector<int>* labels) {
  Matrix x(h.n, h.dim);
  for (std::size_t r = 0; r < h.n; ++r) {
    if (labels) {
      int y = 0;
      if (!(in >> y)) throw ContractViolation("dataset: truncated at row " + std::to_string(r));
      require(y >= 0 && y < h.classes, "dataset: label out of range at row " + std::to_string(r));
      labels->push_back(y);
    }
    for (std::size_t c = 0; c < h.dim; ++c) {
      std::string tok;
      if (!(in >> tok)) throw ContractViolation("dataset: truncated at row " + std::to_string(r));
      x(r, c) = std::strtod(tok.c_str(), nullptr);
    }
  }
  return x;
}

}  // namespace

void write_dataset(std::ostream& out, const LabeledSet& set) {
  out << "bipc-dataset 1 " << set.inputs.cols() << ' ' << set.class_count << ' ' << set.size()
      << ' ' << tag_name(set.tag) << " labeled\n";
  write_rows(out, set.inputs, &set.labels);
}

void write_dataset(std::ostream& out, const UnlabeledSet& set) {
  out << "bipc-dataset 1 " << set.inputs.cols() << ' ' << set.class_count << ' ' << set.size()
      << ' ' << tag_name(set.tag) << " unlabeled\n";
  write_rows(out, set.inputs, nullptr);
}

LabeledSet read_labeled(std::istream& in) {
  const Header h = read_header(in);
  require(h.labeled, "dataset: expected a labeled dump");
  LabeledSet set;
  set.class_count = h.classes;
  set.tag = h.tag;
  set.inputs = read_rows(in, h, &set.labels);
  return set;
}

UnlabeledSet read_unlabeled(std::istream& in) {
  const Header h = read_header(in);
  require(!h.labeled, "dataset: expected an unlabeled dump");
  UnlabeledSet set;
  set.class_count = h.classes;
  set.tag = h.tag;
  set.inputs = read_rows(in, h, nullptr);
  return set;
}

}  // namespace bipc::data
