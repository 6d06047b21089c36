#pragma once

#include <memory>
#include <span>

#include "bipc/matrix.hpp"

namespace bipc::model {

/// c1 x c2 matrix whose row c is the center of class c in the pretrained
/// head's probability space. Rows are distributions with every entry >= kEps.
class Prototype {
 public:
  /// Validates an already-clamped row-stochastic matrix.
  explicit Prototype(Matrix rows);

  /// Clamps each row to >= kEps and renormalises.
  static Prototype from_unnormalized(Matrix rows);

  const Matrix& matrix() const noexcept { return m_; }
  std::size_t task_classes() const noexcept { return m_.rows(); }
  std::size_t pretrain_classes() const noexcept { return m_.cols(); }
  std::span<const double> row(std::size_t c) const noexcept { return m_.row(c); }

  bool operator==(const Prototype&) const = default;

 private:
  Matrix m_;
};

/// Strategy for estimating prototypes from held-out source probabilities.
class PrototypeEstimator {
 public:
  virtual ~PrototypeEstimator() = default;
  virtual Prototype estimate(const Matrix& p_g, std::span<const int> labels,
                             int task_classes) const = 0;
};

/// Class-conditional mean of the probability rows, clamped and renormalised.
/// Rows are accumulated in lexicographic order, so the result does not depend
/// on the order of the input rows.
class ClassMeanPrototype final : public PrototypeEstimator {
 public:
  Prototype estimate(const Matrix& p_g, std::span<const int> labels,
                     int task_classes) const override;
};

/// Throws MissingClass when some class in [0, task_classes) has no row.
Prototype learn_prototype(const Matrix& p_g_val, std::span<const int> labels, int task_classes,
                          const PrototypeEstimator& estimator = ClassMeanPrototype{});

}  // namespace bipc::model
