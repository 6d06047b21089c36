#pragma once

#include <span>
#include <vector>

#include "bipc/matrix.hpp"

namespace bipc {

/// Momentum SGD with coupled weight decay:
///   v <- momentum * v + grad + weight_decay * param
///   param <- param - lr * v
struct SgdState {
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::vector<Matrix> velocity;  // lazily sized on the first step
};

/// Throws TrainingDiverged if any gradient entry is non-finite; params are
/// left untouched in that case.
void sgd_step(std::span<Matrix> params, std::span<const Matrix> grads, SgdState& state, double lr);

}  // namespace bipc
