#pragma once

#include <functional>
#include <span>
#include <vector>

#include "bipc/tape.hpp"

namespace bipc {

/// Builds a scalar (1x1) node from parameter leaves on the given tape.
using TapedScalarFn = std::function<Var(Tape&, std::span<const Var>)>;

/// Compares the tape gradient of `fn` with central differences of step `h`.
/// Returns max over coordinates of |analytic - numeric| / max(1e-8, |numeric|).
double finite_difference_check(const TapedScalarFn& fn, const std::vector<Matrix>& params,
                               double h = 1e-5);

}  // namespace bipc
