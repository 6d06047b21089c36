#include "bipc/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace bipc::kernels {

namespace {

void check_inner(std::size_t inner_a, std::size_t inner_b, const char* name) {
  if (inner_a != inner_b)
    throw ContractViolation(std::string(name) + ": inner dimensions differ");
}

void softmax_row(std::span<const double> in, std::span<double> out) {
  double peak = -std::numeric_limits<double>::infinity();
  for (double v : in) peak = std::max(peak, v);
  double total = 0.0;
  for (std::size_t c = 0; c < in.size(); ++c) {
    out[c] = std::exp(in[c] - peak);
    total += out[c];
  }
  for (double& v : out) v /= total;
}

}  // namespace

namespace serial {

void matmul(const Matrix& a, const Matrix& b, Matrix& out) {
  check_inner(a.cols(), b.rows(), "matmul");
  out = Matrix(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
    }
}

void matmul_at_b(const Matrix& a, const Matrix& b, Matrix& out) {
  check_inner(a.rows(), b.rows(), "matmul_at_b");
  out = Matrix(a.cols(), b.cols());
  for (std::size_t i = 0; i < a.cols(); ++i)
    for (std::size_t k = 0; k < a.rows(); ++k) {
      const double aki = a(k, i);
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aki * b(k, j);
    }
}

void matmul_a_bt(const Matrix& a, const Matrix& b, Matrix& out) {
  check_inner(a.cols(), b.cols(), "matmul_a_bt");
  out = Matrix(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += a(i, k) * b(j, k);
      out(i, j) = acc;
    }
}

void pairwise_add(const Matrix& p, const Matrix& q, Matrix& out) {
  require(p.cols() == q.cols(), "pairwise_add: column counts differ");
  out = Matrix(p.rows() * q.rows(), p.cols());
  for (std::size_t i = 0; i < p.rows(); ++i)
    for (std::size_t j = 0; j < q.rows(); ++j)
      for (std::size_t c = 0; c < p.cols(); ++c) out(i * q.rows() + j, c) = p(i, c) + q(j, c);
}

void pairwise_add_adjoint(const Matrix& grad, Matrix& grad_p, Matrix& grad_q) {
  const std::size_t np = grad_p.rows();
  const std::size_t nq = grad_q.rows();
  require(grad.rows() == np * nq && grad.cols() == grad_p.cols() && grad.cols() == grad_q.cols(),
          "pairwise_add_adjoint: shape mismatch");
  for (std::size_t i = 0; i < np; ++i)
    for (std::size_t j = 0; j < nq; ++j)
      for (std::size_t c = 0; c < grad.cols(); ++c) grad_p(i, c) += grad(i * nq + j, c);
  for (std::size_t j = 0; j < nq; ++j)
    for (std::size_t i = 0; i < np; ++i)
      for (std::size_t c = 0; c < grad.cols(); ++c) grad_q(j, c) += grad(i * nq + j, c);
}

void row_softmax(const Matrix& x, Matrix& out) {
  out = Matrix(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) softmax_row(x.row(r), out.row(r));
}

}  // namespace serial

namespace parallel {

using Index = std::ptrdiff_t;

void matmul(const Matrix& a, const Matrix& b, Matrix& out) {
  check_inner(a.cols(), b.rows(), "matmul");
  out = Matrix(a.rows(), b.cols());
  const Index n = static_cast<Index>(a.rows());
  const std::size_t inner = a.cols();
  const std::size_t width = b.cols();
  const bool big = a.rows() * inner * width >= kParallelWorkThreshold;
  const double* bp = b.values().data();
#pragma omp parallel for schedule(static) if (big)
  for (Index i = 0; i < n; ++i) {
    double* orow = out.row(static_cast<std::size_t>(i)).data();
    const double* arow = a.row(static_cast<std::size_t>(i)).data();
    for (std::size_t k = 0; k < inner; ++k) {
      const double aik = arow[k];
      const double* brow = bp + k * width;
      for (std::size_t j = 0; j < width; ++j) orow[j] += aik * brow[j];
    }
  }
}

void matmul_at_b(const Matrix& a, const Matrix& b, Matrix& out) {
  check_inner(a.rows(), b.rows(), "matmul_at_b");
  out = Matrix(a.cols(), b.cols());
  const Index n = static_cast<Index>(a.cols());
  const std::size_t inner = a.rows();
  const std::size_t width = b.cols();
  const std::size_t stride = a.cols();
  const bool big = a.cols() * inner * width >= kParallelWorkThreshold;
  const double* ap = a.values().data();
  const double* bp = b.values().data();
#pragma omp parallel for schedule(static) if (big)
  for (Index i = 0; i < n; ++i) {
    double* orow = out.row(static_cast<std::size_t>(i)).data();
    for (std::size_t k = 0; k < inner; ++k) {
      const double aki = ap[k * stride + static_cast<std::size_t>(i)];
      const double* brow = bp + k * width;
      for (std::size_t j = 0; j < width; ++j) orow[j] += aki * brow[j];
    }
  }
}

void matmul_a_bt(const Matrix& a, const Matrix& b, Matrix& out) {
  check_inner(a.cols(), b.cols(), "matmul_a_bt");
  out = Matrix(a.rows(), b.rows());
  const Index n = static_cast<Index>(a.rows());
  const std::size_t inner = a.cols();
  const bool big = a.rows() * b.rows() * inner >= kParallelWorkThreshold;
#pragma omp parallel for schedule(static) if (big)
  for (Index i = 0; i < n; ++i) {
    const double* arow = a.row(static_cast<std::size_t>(i)).data();
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const double* brow = b.row(j).data();
      double acc = 0.0;
      for (std::size_t k = 0; k < inner; ++k) acc += arow[k] * brow[k];
      out(static_cast<std::size_t>(i), j) = acc;
    }
  }
}

void pairwise_add(const Matrix& p, const Matrix& q, Matrix& out) {
  require(p.cols() == q.cols(), "pairwise_add: column counts differ");
  out = Matrix(p.rows() * q.rows(), p.cols());
  const Index n = static_cast<Index>(p.rows());
  const std::size_t nq = q.rows();
  const std::size_t width = p.cols();
  const bool big = p.rows() * nq * width >= kParallelWorkThreshold;
#pragma omp parallel for schedule(static) if (big)
  for (Index i = 0; i < n; ++i) {
    const double* prow = p.row(static_cast<std::size_t>(i)).data();
    for (std::size_t j = 0; j < nq; ++j) {
      const double* qrow = q.row(j).data();
      double* orow = out.row(static_cast<std::size_t>(i) * nq + j).data();
      for (std::size_t c = 0; c < width; ++c) orow[c] = prow[c] + qrow[c];
    }
  }
}

void pairwise_add_adjoint(const Matrix& grad, Matrix& grad_p, Matrix& grad_q) {
  const std::size_t np = grad_p.rows();
  const std::size_t nq = grad_q.rows();
  require(grad.rows() == np * nq && grad.cols() == grad_p.cols() && grad.cols() == grad_q.cols(),
          "pairwise_add_adjoint: shape mismatch");
  const std::size_t width = grad.cols();
  const bool big = grad.size() >= kParallelWorkThreshold;
#pragma omp parallel for schedule(static) if (big)
  for (Index i = 0; i < static_cast<Index>(np); ++i) {
    double* gp = grad_p.row(static_cast<std::size_t>(i)).data();
    for (std::size_t j = 0; j < nq; ++j) {
      const double* g = grad.row(static_cast<std::size_t>(i) * nq + j).data();
      for (std::size_t c = 0; c < width; ++c) gp[c] += g[c];
    }
  }
#pragma omp parallel for schedule(static) if (big)
  for (Index j = 0; j < static_cast<Index>(nq); ++j) {
    double* gq = grad_q.row(static_cast<std::size_t>(j)).data();
    for (std::size_t i = 0; i < np; ++i) {
      const double* g = grad.row(i * nq + static_cast<std::size_t>(j)).data();
      for (std::size_t c = 0; c < width; ++c) gq[c] += g[c];
    }
  }
}

void row_softmax(const Matrix& x, Matrix& out) {
  out = Matrix(x.rows(), x.cols());
  const bool big = x.size() * 8 >= kParallelWorkThreshold;
#pragma omp parallel for schedule(static) if (big)
  for (Index r = 0; r < static_cast<Index>(x.rows()); ++r)
    softmax_row(x.row(static_cast<std::size_t>(r)), out.row(static_cast<std::size_t>(r)));
}

}  // namespace parallel

}  // namespace bipc::kernels
