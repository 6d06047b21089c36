#pragma once

// Data-parallel inner loops used by the tape.
//
// Every kernel exists twice: `serial::` is the straightforward reference and
// `parallel::` splits the outermost output loop across OpenMP threads. Each
// output element is accumulated in the same order in both versions, so the
// results are bit-identical regardless of thread count.

#include <cstddef>

#include "bipc/matrix.hpp"

namespace bipc::kernels {

namespace serial {

/// out = a * b
void matmul(const Matrix& a, const Matrix& b, Matrix& out);
/// out = a^T * b
void matmul_at_b(const Matrix& a, const Matrix& b, Matrix& out);
/// out = a * b^T
void matmul_a_bt(const Matrix& a, const Matrix& b, Matrix& out);
/// out.row(i * q.rows() + j) = p.row(i) + q.row(j)
void pairwise_add(const Matrix& p, const Matrix& q, Matrix& out);
/// Adjoint of pairwise_add: reduces the pair gradient onto both operands.
void pairwise_add_adjoint(const Matrix& grad, Matrix& grad_p, Matrix& grad_q);
void row_softmax(const Matrix& x, Matrix& out);

}  // namespace serial

namespace parallel {

void matmul(const Matrix& a, const Matrix& b, Matrix& out);
void matmul_at_b(const Matrix& a, const Matrix& b, Matrix& out);
void matmul_a_bt(const Matrix& a, const Matrix& b, Matrix& out);
void pairwise_add(const Matrix& p, const Matrix& q, Matrix& out);
void pairwise_add_adjoint(const Matrix& grad, Matrix& grad_p, Matrix& grad_q);
void row_softmax(const Matrix& x, Matrix& out);

}  // namespace parallel

/// Below this many multiply-adds the parallel kernels stay on one thread.
inline constexpr std::size_t kParallelWorkThreshold = 1 << 15;

}  // namespace bipc::kernels
