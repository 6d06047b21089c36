#include "bipc/sgd.hpp"

#include <cmath>

namespace bipc {

void sgd_step(std::span<Matrix> params, std::span<const Matrix> grads, SgdState& state,
              double lr) {
  require(params.size() == grads.size(), "sgd_step: params and grads differ in count");
  require(lr > 0.0, "sgd_step: learning rate must be positive");
  for (std::size_t i = 0; i < params.size(); ++i) {
    require(params[i].same_shape(grads[i]), "sgd_step: gradient shape mismatch");
    if (!all_finite(grads[i])) throw TrainingDiverged("gradient", -1);
  }
  if (state.velocity.empty()) {
    state.velocity.reserve(params.size());
    for (const Matrix& p : params) state.velocity.emplace_back(p.rows(), p.cols());
  }
  require(state.velocity.size() == params.size(), "sgd_step: optimizer state tracks other params");

  for (std::size_t i = 0; i < params.size(); ++i) {
    require(state.velocity[i].same_shape(params[i]), "sgd_step: velocity shape mismatch");
    auto v = state.velocity[i].values();
    auto p = params[i].values();
    auto g = grads[i].values();
    for (std::size_t k = 0; k < p.size(); ++k) {
      v[k] = state.momentum * v[k] + g[k] + state.weight_decay * p[k];
      p[k] -= lr * v[k];
    }
  }
}

}  // namespace bipc
