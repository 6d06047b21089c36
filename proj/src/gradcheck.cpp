#include "bipc/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace bipc {

namespace {

double evaluate(const TapedScalarFn& fn, const std::vector<Matrix>& params) {
  Tape tape;
  std::vector<Var> leaves;
  leaves.reserve(params.size());
  for (const Matrix& p : params) leaves.push_back(tape.constant(p));
  return fn(tape, leaves).value().item();
}

}  // namespace

double finite_difference_check(const TapedScalarFn& fn, const std::vector<Matrix>& params,
                               double h) {
  require(h > 0.0, "finite_difference_check: step must be positive");

  Tape tape;
  std::vector<Var> leaves;
  leaves.reserve(params.size());
  for (const Matrix& p : params) leaves.push_back(tape.parameter(p));
  const Var out = fn(tape, leaves);
  const Gradients grads = tape.backward(out);

  double worst = 0.0;
  std::vector<Matrix> probe = params;
  for (std::size_t k = 0; k < params.size(); ++k) {
    const Matrix analytic = grads.of(leaves[k]);
    for (std::size_t i = 0; i < params[k].size(); ++i) {
      const double x0 = params[k].values()[i];
      probe[k].values()[i] = x0 + h;
      const double up = evaluate(fn, probe);
      probe[k].values()[i] = x0 - h;
      const double down = evaluate(fn, probe);
      probe[k].values()[i] = x0;
      const double numeric = (up - down) / (2.0 * h);
      const double err =
          std::abs(analytic.values()[i] - numeric) / std::max(1e-8, std::abs(numeric));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace bipc
