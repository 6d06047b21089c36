#pragma once

#include <string>
#include <vector>

namespace bipc {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Fast invariant checks over the numerical core, losses and config layer,
/// run by `bipc selftest`. Deterministic; takes well under a second.
std::vector<CheckResult> run_selfchecks();

}  // namespace bipc
