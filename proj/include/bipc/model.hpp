#pragma once

// Three-part network: backbone F (theta), pretrained head G (theta_g) and task
// head H (theta_h). Each group is a flat list of (weight, bias) pairs.

#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bipc/data.hpp"
#include "bipc/matrix.hpp"
#include "bipc/prototype.hpp"
#include "bipc/rng.hpp"
#include "bipc/tape.hpp"

namespace bipc::model {

enum class Group { theta, theta_g, theta_h };

const char* group_name(Group g) noexcept;
Group parse_group(const std::string& text);

struct Architecture {
  int input_dim = 8;
  std::vector<int> hidden{64, 64};
  int feature_dim = 32;
  int pretrain_classes = 8;  // c2
  int task_classes = 4;      // c1

  bool operator==(const Architecture&) const = default;
};

struct ParamGroups {
  std::vector<Matrix> theta;    // W0, b0, W1, b1, ...; relu after every layer
  std::vector<Matrix> theta_g;  // W, b; softmax
  std::vector<Matrix> theta_h;  // W, b; softmax

  std::vector<Matrix>& group(Group g);
  const std::vector<Matrix>& group(Group g) const;
  bool operator==(const ParamGroups&) const = default;
};

/// He-normal backbone weights, 1/fan_in-normal head weights, zero biases.
ParamGroups init_params(const Architecture& arch, Rng& rng);
/// Fresh task head of width c1 on top of the given feature width.
std::vector<Matrix> init_head(int feature_dim, int classes, Rng& rng);

/// Parameters placed on a tape as gradient-carrying leaves.
struct BoundParams {
  std::vector<Var> theta;
  std::vector<Var> theta_g;
  std::vector<Var> theta_h;

  const std::vector<Var>& group(Group g) const;
};

BoundParams bind(Tape& tape, const ParamGroups& params);

Var feature_extract(std::span<const Var> theta, Var x);
Var head_forward(std::span<const Var> head, Var features);

Matrix feature_extract(std::span<const Matrix> theta, const Matrix& x);
Matrix head_forward(std::span<const Matrix> head, const Matrix& features);

struct PretrainConfig {
  int epochs = 30;
  int batch_size = 32;
  double lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 5e-4;

  bool operator==(const PretrainConfig&) const = default;
};

struct PretrainResult {
  ParamGroups params;
  double heldout_accuracy = 0.0;
};

/// Cross-entropy training of theta and theta_g on the pretraining task.
/// theta_h is carried through untouched. Throws TrainingDiverged with the
/// epoch index on a non-finite loss.
PretrainResult pretrain(ParamGroups init, const data::LabeledSet& train,
                        const data::LabeledSet& heldout, const PretrainConfig& config, Rng& rng);

/// Stratified 1:1 split of the source set into (prototype half, training
/// half). An odd class gives its extra sample to the training half.
std::pair<data::LabeledSet, data::LabeledSet> split_source(const data::LabeledSet& source,
                                                           Rng& rng);

// Checkpoint text format:
//   line 1: "BIPC-PARAMS 1"
//   per group: "group <theta|theta_g|theta_h> <tensor count>"
//     per tensor: "tensor <rows> <cols>" then one line per row, %.17g values
void write_checkpoint(std::ostream& out, const ParamGroups& params);
ParamGroups read_checkpoint(std::istream& in);

}  // namespace bipc::model
