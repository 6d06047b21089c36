#pragma once

#include <cstddef>
#include <deque>
#include <initializer_list>
#include <optional>
#include <span>
#include <vector>

#include "bipc/matrix.hpp"

namespace bipc {

/// The closed set of differentiable primitives. Every loss in the project is
/// composed from these; `pairwise_add`, `add`, `exp` and `clamp_min` extend the
/// minimal list so pairwise divergences and focal weights stay on the tape.
enum class OpKind {
  matmul,         // (n x k) * (k x m)
  add,            // same shape
  add_bias,       // (n x c) + broadcast (1 x c)
  relu,
  row_softmax,
  elementwise_log,
  elementwise_exp,
  elementwise_mul,  // same shape
  scalar_affine,    // scale * x + shift
  clamp_min,        // max(x, floor); gradient passes where x > floor
  row_sum,          // (n x c) -> (n x 1)
  col_sum,          // (n x c) -> (1 x c)
  mean,             // (n x c) -> (1 x 1)
  pairwise_add,     // (n x c), (m x c) -> (n*m x c), row i*m+j = a_i + b_j
};

const char* op_name(OpKind kind) noexcept;
std::size_t op_arity(OpKind kind) noexcept;

struct OpAttrs {
  double scale = 1.0;
  double shift = 0.0;
  double floor = kEps;
};

/// Untaped evaluation of one primitive. Throws ContractViolation on a shape
/// mismatch and DomainError on log of a non-positive entry.
Matrix primitive_forward(OpKind kind, std::span<const Matrix* const> inputs,
                         const OpAttrs& attrs = {});

class Tape;

/// Handle to a node recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  Tape& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  const Matrix& value() const;
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Result of a backward pass: accumulated adjoint per node that lies on a
/// path to the output and requires a gradient.
class Gradients {
 public:
  bool has(Var v) const noexcept { return v.id() < grads_.size() && grads_[v.id()].has_value(); }
  /// Gradient of the output w.r.t. `v`; zeros when no path exists.
  Matrix of(Var v) const;

 private:
  friend class Tape;
  std::vector<std::optional<Matrix>> grads_;
  std::vector<std::pair<std::size_t, std::size_t>> shapes_;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that receives a gradient.
  Var parameter(Matrix value);
  /// Leaf that never receives a gradient.
  Var constant(Matrix value);
  /// Constant copy of `v`'s current value; severs the gradient path.
  Var detach(Var v);

  Var record(OpKind kind, std::initializer_list<Var> inputs, const OpAttrs& attrs = {});

  const Matrix& value(Var v) const { return nodes_.at(v.id()).value; }
  bool requires_grad(Var v) const { return nodes_.at(v.id()).requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Reverse sweep from a 1x1 node. Nodes are visited once, in reverse
  /// recording order (a topological order by construction).
  Gradients backward(Var output) const;

 private:
  struct Node {
    std::optional<OpKind> kind;  // empty for leaves
    std::size_t inputs[2] = {0, 0};
    std::size_t arity = 0;
    OpAttrs attrs;
    Matrix value;
    bool requires_grad = false;
  };

  Var push(Node node);
  void check_owner(Var v) const;

  std::deque<Node> nodes_;  // stable addresses: values stay valid as the tape grows
};

inline const Matrix& Var::value() const { return tape_->value(*this); }

// Graph-building helpers; all inputs must live on the same tape.
Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var add_bias(Var x, Var bias);
Var relu(Var x);
Var row_softmax(Var x);
Var elementwise_log(Var x);
Var elementwise_exp(Var x);
Var elementwise_mul(Var a, Var b);
Var scalar_affine(Var x, double scale, double shift);
Var clamp_min(Var x, double floor = kEps);
Var row_sum(Var x);
Var col_sum(Var x);
Var mean(Var x);
Var pairwise_add(Var a, Var b);
/// Sum of every entry, as a 1x1 node (row sums first, then down the column).
Var total(Var x);

}  // namespace bipc
