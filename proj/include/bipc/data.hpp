#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "bipc/matrix.hpp"
#include "bipc/rng.hpp"

namespace bipc::data {

enum class DomainTag { source, target, pretrain };

const char* tag_name(DomainTag tag) noexcept;
DomainTag parse_tag(const std::string& text);

struct LabeledSet {
  Matrix inputs;            // n x D
  std::vector<int> labels;  // n entries in [0, class_count)
  int class_count = 0;
  DomainTag tag = DomainTag::source;

  std::size_t size() const noexcept { return inputs.rows(); }
};

/// Training-facing view of an unlabeled domain. Deliberately has no labels.
struct UnlabeledSet {
  Matrix inputs;
  int class_count = 0;
  DomainTag tag = DomainTag::target;

  std::size_t size() const noexcept { return inputs.rows(); }
};

/// Ground truth for an unlabeled domain. The values can only be consumed by
/// `sealed_accuracy`, so nothing on the training path can read them.
class SealedLabels {
 public:
  SealedLabels() = default;
  std::size_t size() const noexcept { return labels_.size(); }

  friend SealedLabels seal(std::vector<int> labels);
  friend double sealed_accuracy(std::span<const int> predictions, const SealedLabels& truth);

 private:
  explicit SealedLabels(std::vector<int> labels) : labels_(std::move(labels)) {}
  std::vector<int> labels_;
};

SealedLabels seal(std::vector<int> labels);
double sealed_accuracy(std::span<const int> predictions, const SealedLabels& truth);

/// Covariate shift applied to target inputs: Givens rotation by `rotation`
/// radians in each coordinate plane (0,1), (2,3), ..., then translation, then
/// isotropic Gaussian noise of standard deviation `noise`.
struct ShiftSpec {
  double rotation = 0.0;
  std::vector<double> translation;  // empty means zero; otherwise length D
  double noise = 0.0;

  bool operator==(const ShiftSpec&) const = default;
};

struct GeneratorSpec {
  int dim = 8;
  int pretrain_classes = 8;  // c2
  int task_classes = 4;      // c1; task classes are the first c1 pretrain clusters
  int target_classes = 0;    // 0 means all task classes appear in the target
  int samples_per_class = 100;
  int pretrain_samples_per_class = 150;
  double heldout_fraction = 0.25;
  double cluster_spread = 0.25;
  ShiftSpec shift{0.8, {}, 0.05};
  /// Pretraining inputs see rotations drawn from [-max, max] and a random
  /// fraction of the shift translation, standing in for a broad pretraining
  /// corpus that covers many styles.
  double pretrain_rotation_max = 0.6;
  double pretrain_translation_max = 0.0;
  std::uint64_t seed = 0;

  int effective_target_classes() const noexcept {
    return target_classes > 0 ? target_classes : task_classes;
  }
  bool operator==(const GeneratorSpec&) const = default;
};

/// Throws ContractViolation naming the offending field.
void validate(const GeneratorSpec& spec);

struct PretrainTask {
  LabeledSet train;
  LabeledSet heldout;
};

struct UdaPair {
  LabeledSet source;
  UnlabeledSet target;
  SealedLabels target_labels;
};

/// c2 x D matrix of unit-norm cluster centers, a pure function of the seed.
Matrix class_centers(const GeneratorSpec& spec);

void apply_shift(Matrix& inputs, const ShiftSpec& shift, Rng& rng);

PretrainTask make_pretrain_task(const GeneratorSpec& spec);
UdaPair make_uda_pair(const GeneratorSpec& spec);

// Text dump:
//   line 1: "bipc-dataset 1 <D> <C> <n> <domain_tag> <labeled|unlabeled>"
//   then n lines: "[<label> ]<x_1> ... <x_D>" with %.17g values.
void write_dataset(std::ostream& out, const LabeledSet& set);
void write_dataset(std::ostream& out, const UnlabeledSet& set);
LabeledSet read_labeled(std::istream& in);
UnlabeledSet read_unlabeled(std::istream& in);

}  // namespace bipc::data
