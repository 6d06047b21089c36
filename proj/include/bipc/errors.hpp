#pragma once

#include <stdexcept>
#include <string>

namespace bipc {

/// Caller broke a documented precondition (shape, range, arity).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A primitive was asked to evaluate outside its mathematical domain.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A loss or gradient became non-finite during optimisation.
class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(std::string what_loss, int epoch)
      : std::runtime_error("training diverged: non-finite " + what_loss +
                           (epoch >= 0 ? " at epoch " + std::to_string(epoch) : std::string{})),
        loss_(std::move(what_loss)),
        epoch_(epoch) {}

  const std::string& loss() const noexcept { return loss_; }
  int epoch() const noexcept { return epoch_; }

 private:
  std::string loss_;
  int epoch_;
};

/// A class needed by an estimator has no samples.
class MissingClass : public std::runtime_error {
 public:
  explicit MissingClass(int cls)
      : std::runtime_error("class " + std::to_string(cls) + " has no samples"), cls_(cls) {}
  int cls() const noexcept { return cls_; }

 private:
  int cls_;
};

inline void require(bool ok, const std::string& message) {
  if (!ok) throw ContractViolation(message);
}

}  // namespace bipc
