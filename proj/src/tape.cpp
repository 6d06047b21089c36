#include "bipc/tape.hpp"

#include <cmath>
#include <string>

#include "bipc/kernels.hpp"

namespace bipc {

namespace {

std::string shape_str(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void require_same_shape(const Matrix& a, const Matrix& b, OpKind kind) {
  if (!a.same_shape(b))
    throw ContractViolation(std::string(op_name(kind)) + ": shape mismatch " + shape_str(a) +
                            " vs " + shape_str(b));
}

Matrix zeros_like(const Matrix& m) { return Matrix(m.rows(), m.cols()); }

void accumulate(std::optional<Matrix>& slot, const Matrix& delta) {
  if (!slot) {
    slot = delta;
    return;
  }
  auto dst = slot->values();
  auto src = delta.values();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

const char* op_name(OpKind kind) noexcept {
  switch (kind) {
    case OpKind::matmul: return "matmul";
    case OpKind::add: return "add";
    case OpKind::add_bias: return "add_bias";
    case OpKind::relu: return "relu";
    case OpKind::row_softmax: return "row_softmax";
    case OpKind::elementwise_log: return "elementwise_log";
    case OpKind::elementwise_exp: return "elementwise_exp";
    case OpKind::elementwise_mul: return "elementwise_mul";
    case OpKind::scalar_affine: return "scalar_affine";
    case OpKind::clamp_min: return "clamp_min";
    case OpKind::row_sum: return "row_sum";
    case OpKind::col_sum: return "col_sum";
    case OpKind::mean: return "mean";
    case OpKind::pairwise_add: return "pairwise_add";
  }
  return "?";
}

std::size_t op_arity(OpKind kind) noexcept {
  switch (kind) {
    case OpKind::matmul:
    case OpKind::add:
    case OpKind::add_bias:
    case OpKind::elementwise_mul:
    case OpKind::pairwise_add:
      return 2;
    default:
      return 1;
  }
}

Matrix primitive_forward(OpKind kind, std::span<const Matrix* const> inputs,
                         const OpAttrs& attrs) {
  if (inputs.size() != op_arity(kind))
    throw ContractViolation(std::string(op_name(kind)) + ": wrong number of inputs");
  const Matrix& a = *inputs[0];
  Matrix out;
  switch (kind) {
    case OpKind::matmul:
      kernels::parallel::matmul(a, *inputs[1], out);
      return out;
    case OpKind::add: {
      const Matrix& b = *inputs[1];
      require_same_shape(a, b, kind);
      out = a;
      auto o = out.values();
      auto bv = b.values();
      for (std::size_t i = 0; i < o.size(); ++i) o[i] += bv[i];
      return out;
    }
    case OpKind::add_bias: {
      const Matrix& bias = *inputs[1];
      if (bias.rows() != 1 || bias.cols() != a.cols())
        throw ContractViolation("add_bias: bias " + shape_str(bias) + " does not fit " +
                                shape_str(a));
      out = a;
      for (std::size_t r = 0; r < out.rows(); ++r)
        for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += bias(0, c);
      return out;
    }
    case OpKind::relu:
      out = a;
      for (double& v : out.values()) v = v <= 0.0 ? 0.0 : v;  // NaN propagates
      return out;
    case OpKind::row_softmax:
      kernels::parallel::row_softmax(a, out);
      return out;
    case OpKind::elementwise_log:
      out = a;
      for (double& v : out.values()) {
        if (v <= 0.0) throw DomainError("elementwise_log: non-positive entry; clamp first");
        v = std::log(v);
      }
      return out;
    case OpKind::elementwise_exp:
      out = a;
      for (double& v : out.values()) v = std::exp(v);
      return out;
    case OpKind::elementwise_mul: {
      const Matrix& b = *inputs[1];
      require_same_shape(a, b, kind);
      out = a;
      auto o = out.values();
      auto bv = b.values();
      for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bv[i];
      return out;
    }
    case OpKind::scalar_affine:
      out = a;
      for (double& v : out.values()) v = attrs.scale * v + attrs.shift;
      return out;
    case OpKind::clamp_min:
      out = a;
      for (double& v : out.values()) v = v < attrs.floor ? attrs.floor : v;  // NaN propagates
      return out;
    case OpKind::row_sum:
      out = Matrix(a.rows(), 1);
      for (std::size_t r = 0; r < a.rows(); ++r) {
        double acc = 0.0;
        for (double v : a.row(r)) acc += v;
        out(r, 0) = acc;
      }
      return out;
    case OpKind::col_sum:
      out = Matrix(1, a.cols());
      for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t c = 0; c < a.cols(); ++c) out(0, c) += a(r, c);
      return out;
    case OpKind::mean: {
      require(a.size() > 0, "mean: empty input");
      double acc = 0.0;
      for (double v : a.values()) acc += v;
      return Matrix::scalar(acc / static_cast<double>(a.size()));
    }
    case OpKind::pairwise_add:
      kernels::parallel::pairwise_add(a, *inputs[1], out);
      return out;
  }
  throw ContractViolation("primitive_forward: unknown op");
}

Matrix Gradients::of(Var v) const {
  if (has(v)) return *grads_[v.id()];
  require(v.id() < shapes_.size(), "Gradients::of: variable not on this tape");
  return Matrix(shapes_[v.id()].first, shapes_[v.id()].second);
}

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

void Tape::check_owner(Var v) const {
  if (v.tape_ != this || v.id_ >= nodes_.size())
    throw ContractViolation("Var does not belong to this tape");
}

Var Tape::parameter(Matrix value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

Var Tape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::detach(Var v) {
  check_owner(v);
  return constant(nodes_[v.id()].value);
}

Var Tape::record(OpKind kind, std::initializer_list<Var> inputs, const OpAttrs& attrs) {
  if (inputs.size() != op_arity(kind))
    throw ContractViolation(std::string(op_name(kind)) + ": wrong number of inputs");
  const Matrix* values[2] = {nullptr, nullptr};
  Node n;
  n.kind = kind;
  n.attrs = attrs;
  n.arity = inputs.size();
  std::size_t k = 0;
  for (Var v : inputs) {
    check_owner(v);
    n.inputs[k] = v.id();
    values[k] = &nodes_[v.id()].value;
    n.requires_grad = n.requires_grad || nodes_[v.id()].requires_grad;
    ++k;
  }
  n.value = primitive_forward(kind, std::span<const Matrix* const>(values, n.arity), attrs);
  return push(std::move(n));
}

Gradients Tape::backward(Var output) const {
  check_owner(output);
  const Matrix& out_value = nodes_[output.id()].value;
  if (out_value.rows() != 1 || out_value.cols() != 1)
    throw ContractViolation("backward: output must be a 1x1 scalar, got " + shape_str(out_value));

  Gradients g;
  g.grads_.resize(nodes_.size());
  g.shapes_.reserve(nodes_.size());
  for (const Node& n : nodes_) g.shapes_.emplace_back(n.value.rows(), n.value.cols());
  if (!nodes_[output.id()].requires_grad) return g;

  g.grads_[output.id()] = Matrix::scalar(1.0);
  for (std::size_t id = output.id() + 1; id-- > 0;) {
    const Node& node = nodes_[id];
    if (!node.kind || !node.requires_grad || !g.grads_[id]) continue;
    const Matrix& dy = *g.grads_[id];
    const Node& in0 = nodes_[node.inputs[0]];
    const Node* in1 = node.arity > 1 ? &nodes_[node.inputs[1]] : nullptr;
    auto& slot0 = g.grads_[node.inputs[0]];
    auto propagate0 = [&](const Matrix& d) {
      if (in0.requires_grad) accumulate(slot0, d);
    };
    auto propagate1 = [&](const Matrix& d) {
      if (in1 && in1->requires_grad) accumulate(g.grads_[node.inputs[1]], d);
    };

    switch (*node.kind) {
      case OpKind::matmul: {
        if (in0.requires_grad) {
          Matrix da;
          kernels::parallel::matmul_a_bt(dy, in1->value, da);
          propagate0(da);
        }
        if (in1->requires_grad) {
          Matrix db;
          kernels::parallel::matmul_at_b(in0.value, dy, db);
          propagate1(db);
        }
        break;
      }
      case OpKind::add:
        propagate0(dy);
        propagate1(dy);
        break;
      case OpKind::add_bias: {
        propagate0(dy);
        if (in1->requires_grad) {
          Matrix db(1, dy.cols());
          for (std::size_t r = 0; r < dy.rows(); ++r)
            for (std::size_t c = 0; c < dy.cols(); ++c) db(0, c) += dy(r, c);
          propagate1(db);
        }
        break;
      }
      case OpKind::relu: {
        Matrix dx = dy;
        auto x = in0.value.values();
        auto d = dx.values();
        for (std::size_t i = 0; i < d.size(); ++i)
          if (x[i] <= 0.0) d[i] = 0.0;
        propagate0(dx);
        break;
      }
      case OpKind::row_softmax: {
        Matrix dx(dy.rows(), dy.cols());
        for (std::size_t r = 0; r < dy.rows(); ++r) {
          double dot = 0.0;
          for (std::size_t c = 0; c < dy.cols(); ++c) dot += dy(r, c) * node.value(r, c);
          for (std::size_t c = 0; c < dy.cols(); ++c)
            dx(r, c) = node.value(r, c) * (dy(r, c) - dot);
        }
        propagate0(dx);
        break;
      }
      case OpKind::elementwise_log: {
        Matrix dx = dy;
        auto x = in0.value.values();
        auto d = dx.values();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] /= x[i];
        propagate0(dx);
        break;
      }
      case OpKind::elementwise_exp: {
        Matrix dx = dy;
        auto y = node.value.values();
        auto d = dx.values();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] *= y[i];
        propagate0(dx);
        break;
      }
      case OpKind::elementwise_mul: {
        if (in0.requires_grad) {
          Matrix da = dy;
          auto b = in1->value.values();
          auto d = da.values();
          for (std::size_t i = 0; i < d.size(); ++i) d[i] *= b[i];
          propagate0(da);
        }
        if (in1->requires_grad) {
          Matrix db = dy;
          auto a = in0.value.values();
          auto d = db.values();
          for (std::size_t i = 0; i < d.size(); ++i) d[i] *= a[i];
          propagate1(db);
        }
        break;
      }
      case OpKind::scalar_affine: {
        Matrix dx = dy;
        for (double& v : dx.values()) v *= node.attrs.scale;
        propagate0(dx);
        break;
      }
      case OpKind::clamp_min: {
        Matrix dx = dy;
        auto x = in0.value.values();
        auto d = dx.values();
        for (std::size_t i = 0; i < d.size(); ++i)
          if (x[i] <= node.attrs.floor) d[i] = 0.0;
        propagate0(dx);
        break;
      }
      case OpKind::row_sum: {
        Matrix dx = zeros_like(in0.value);
        for (std::size_t r = 0; r < dx.rows(); ++r)
          for (std::size_t c = 0; c < dx.cols(); ++c) dx(r, c) = dy(r, 0);
        propagate0(dx);
        break;
      }
      case OpKind::col_sum: {
        Matrix dx = zeros_like(in0.value);
        for (std::size_t r = 0; r < dx.rows(); ++r)
          for (std::size_t c = 0; c < dx.cols(); ++c) dx(r, c) = dy(0, c);
        propagate0(dx);
        break;
      }
      case OpKind::mean: {
        const double share = dy(0, 0) / static_cast<double>(in0.value.size());
        propagate0(Matrix(in0.value.rows(), in0.value.cols(), share));
        break;
      }
      case OpKind::pairwise_add: {
        Matrix da = zeros_like(in0.value);
        Matrix db = zeros_like(in1->value);
        kernels::parallel::pairwise_add_adjoint(dy, da, db);
        propagate0(da);
        propagate1(db);
        break;
      }
    }
  }
  return g;
}

namespace {

Var rec(OpKind kind, std::initializer_list<Var> in, const OpAttrs& attrs = {}) {
  return in.begin()->tape().record(kind, in, attrs);
}

}  // namespace

Var matmul(Var a, Var b) { return rec(OpKind::matmul, {a, b}); }
Var add(Var a, Var b) { return rec(OpKind::add, {a, b}); }
Var sub(Var a, Var b) { return add(a, scalar_affine(b, -1.0, 0.0)); }
Var add_bias(Var x, Var bias) { return rec(OpKind::add_bias, {x, bias}); }
Var relu(Var x) { return rec(OpKind::relu, {x}); }
Var row_softmax(Var x) { return rec(OpKind::row_softmax, {x}); }
Var elementwise_log(Var x) { return rec(OpKind::elementwise_log, {x}); }
Var elementwise_exp(Var x) { return rec(OpKind::elementwise_exp, {x}); }
Var elementwise_mul(Var a, Var b) { return rec(OpKind::elementwise_mul, {a, b}); }
Var scalar_affine(Var x, double scale, double shift) {
  return rec(OpKind::scalar_affine, {x}, OpAttrs{.scale = scale, .shift = shift});
}
Var clamp_min(Var x, double floor) {
  return rec(OpKind::clamp_min, {x}, OpAttrs{.floor = floor});
}
Var row_sum(Var x) { return rec(OpKind::row_sum, {x}); }
Var col_sum(Var x) { return rec(OpKind::col_sum, {x}); }
Var mean(Var x) { return rec(OpKind::mean, {x}); }
Var pairwise_add(Var a, Var b) { return rec(OpKind::pairwise_add, {a, b}); }
Var total(Var x) { return col_sum(row_sum(x)); }

}  // namespace bipc
