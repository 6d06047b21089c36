#include "doctest.h"

#include <cmath>

#include "bipc/gradcheck.hpp"
#include "bipc/kernels.hpp"
#include "bipc/sgd.hpp"
#include "bipc/tape.hpp"
#include "support.hpp"

using namespace bipc;
using testing::random_matrix;

namespace {

Matrix forward(OpKind kind, std::initializer_list<const Matrix*> inputs, OpAttrs attrs = {}) {
  const std::vector<const Matrix*> v(inputs);
  return primitive_forward(kind, v, attrs);
}

}  // namespace

TEST_CASE("primitive examples") {
  const Matrix zeros = Matrix::from_rows({{0, 0}});
  CHECK(forward(OpKind::row_softmax, {&zeros}) == Matrix::from_rows({{0.5, 0.5}}));
  const Matrix x = Matrix::from_rows({{-1, 2}});
  CHECK(forward(OpKind::relu, {&x}) == Matrix::from_rows({{0, 2}}));
  const Matrix a = Matrix::from_rows({{1, 2}});
  const Matrix b = Matrix::from_rows({{3}, {4}});
  CHECK(forward(OpKind::matmul, {&a, &b}) == Matrix::from_rows({{11}}));
}

TEST_CASE("relu and clamp_min propagate NaN") {
  const Matrix x = Matrix::from_rows({{std::nan(""), -0.5, 0.25}});
  const Matrix r = forward(OpKind::relu, {&x});
  CHECK(std::isnan(r(0, 0)));
  CHECK(r(0, 1) == 0.0);
  OpAttrs attrs;
  attrs.floor = 0.1;
  const Matrix c = forward(OpKind::clamp_min, {&x}, attrs);
  CHECK(std::isnan(c(0, 0)));
  CHECK(c(0, 1) == 0.1);
  CHECK(c(0, 2) == 0.25);
}

TEST_CASE("primitive reductions and affine ops") {
  const Matrix m = Matrix::from_rows({{1, 2, 3}, {4, 5, 6}});
  CHECK(forward(OpKind::row_sum, {&m}) == Matrix::from_rows({{6}, {15}}));
  CHECK(forward(OpKind::col_sum, {&m}) == Matrix::from_rows({{5, 7, 9}}));
  CHECK(forward(OpKind::mean, {&m}).item() == doctest::Approx(3.5));
  CHECK(forward(OpKind::scalar_affine, {&m}, {2.0, -1.0, 0.0}) ==
        Matrix::from_rows({{1, 3, 5}, {7, 9, 11}}));
  const Matrix bias = Matrix::from_rows({{10, 20, 30}});
  CHECK(forward(OpKind::add_bias, {&m, &bias}) == Matrix::from_rows({{11, 22, 33}, {14, 25, 36}}));
  const Matrix p = Matrix::from_rows({{1, 2}, {3, 4}});
  const Matrix q = Matrix::from_rows({{10, 20}, {30, 40}, {50, 60}});
  const Matrix pairs = forward(OpKind::pairwise_add, {&p, &q});
  REQUIRE(pairs.rows() == 6);
  CHECK(pairs(4, 0) == 33);  // row i*m+j = p_1 + q_1
  CHECK(pairs(2, 1) == 62);
}

TEST_CASE("primitive errors") {
  const Matrix a(2, 3);
  const Matrix b(2, 3);
  CHECK_THROWS_AS(forward(OpKind::matmul, {&a, &b}), ContractViolation);
  const Matrix bad_bias(1, 2);
  CHECK_THROWS_AS(forward(OpKind::add_bias, {&a, &bad_bias}), ContractViolation);
  const Matrix nonpos = Matrix::from_rows({{1.0, 0.0}});
  CHECK_THROWS_AS(forward(OpKind::elementwise_log, {&nonpos}), DomainError);
  CHECK_THROWS_AS(forward(OpKind::matmul, {&a}), ContractViolation);
}

TEST_CASE("row_softmax rows sum to one and stay positive") {
  Rng rng(3);
  for (int t = 0; t < 50; ++t) {
    const Matrix x = random_matrix(4, 6, rng, 30.0);
    const Matrix p = forward(OpKind::row_softmax, {&x});
    for (std::size_t i = 0; i < p.rows(); ++i) {
      double s = 0.0;
      for (double v : p.row(i)) {
        CHECK(v > 0.0);
        s += v;
      }
      CHECK(std::abs(s - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("backward examples") {
  {
    Tape tape;
    const Var x = tape.parameter(Matrix::from_rows({{1, 2}}));
    const Gradients g = tape.backward(total(elementwise_mul(x, x)));
    CHECK(g.of(x) == Matrix::from_rows({{2, 4}}));
  }
  {
    Tape tape;
    const Var x = tape.parameter(Matrix::from_rows({{0, 0}}));
    const Var pick = tape.constant(Matrix::from_rows({{1, 0}}));
    const Gradients g = tape.backward(total(elementwise_mul(row_softmax(x), pick)));
    CHECK(g.of(x)(0, 0) == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(g.of(x)(0, 1) == doctest::Approx(-0.25).epsilon(1e-15));
  }
}

TEST_CASE("backward requires a scalar output") {
  Tape tape;
  const Var x = tape.parameter(Matrix(2, 2, 1.0));
  CHECK_THROWS_AS(tape.backward(row_sum(x)), ContractViolation);
}

TEST_CASE("constants and detached nodes receive no gradient") {
  Tape tape;
  const Var x = tape.parameter(Matrix::from_rows({{1, 2}}));
  const Var c = tape.constant(Matrix::from_rows({{3, 4}}));
  const Var d = tape.detach(x);
  const Gradients g = tape.backward(total(add(elementwise_mul(x, c), elementwise_mul(d, d))));
  CHECK(g.of(x) == Matrix::from_rows({{3, 4}}));
  CHECK_FALSE(g.has(c));
  CHECK(g.of(d) == Matrix(1, 2));
}

TEST_CASE("every primitive agrees with central differences") {
  Rng rng(11);
  const TapedScalarFn graph = [](Tape& tape, std::span<const Var> v) {
    const Var h = relu(add_bias(matmul(v[0], v[1]), v[2]));
    const Var p = row_softmax(scalar_affine(h, 0.7, 0.1));
    const Var pairs = pairwise_add(p, p);
    const Var logs = elementwise_log(clamp_min(pairs, 1e-6));
    const Var e = elementwise_exp(scalar_affine(row_sum(p), -0.5, 0.0));
    return add(mean(elementwise_mul(pairs, logs)),
               sub(total(col_sum(e)), mean(tape.constant(Matrix(1, 1, 0.0)))));
  };
  for (int t = 0; t < 10; ++t) {
    const double err = finite_difference_check(
        graph, {random_matrix(3, 4, rng), random_matrix(4, 5, rng), random_matrix(1, 5, rng)});
    CHECK(err < 1e-4);
  }
}

TEST_CASE("finite differences are exact for quadratics") {
  Rng rng(5);
  const Matrix a = random_matrix(3, 3, rng);
  const double err = finite_difference_check(
      [&](Tape& tape, std::span<const Var> v) {
        return total(elementwise_mul(v[0], matmul(tape.constant(a), v[0])));
      },
      {random_matrix(3, 2, rng)});
  CHECK(err < 1e-7);
}

TEST_CASE("sgd examples") {
  std::vector<Matrix> p{Matrix::from_rows({{1.0, -2.0}})};
  const std::vector<Matrix> g{Matrix::from_rows({{0.5, 0.25}})};

  SgdState plain{0.0, 0.0, {}};
  auto q = p;
  sgd_step(q, g, plain, 1.0);
  CHECK(q[0] == Matrix::from_rows({{0.5, -2.25}}));

  SgdState heavy{0.9, 0.0, {}};
  auto r = p;
  sgd_step(r, g, heavy, 1.0);
  sgd_step(r, g, heavy, 1.0);
  // displacement g + 1.9 g
  CHECK(r[0](0, 0) == doctest::Approx(1.0 - 2.9 * 0.5).epsilon(1e-15));
  CHECK(r[0](0, 1) == doctest::Approx(-2.0 - 2.9 * 0.25).epsilon(1e-15));

  SgdState decay{0.0, 5e-4, {}};
  std::vector<Matrix> one{Matrix::scalar(1.0)};
  sgd_step(one, std::vector<Matrix>{Matrix::scalar(0.0)}, decay, 1.0);
  CHECK(one[0].item() == doctest::Approx(0.9995).epsilon(1e-15));
}

TEST_CASE("plain sgd is exactly param - lr * grad") {
  Rng rng(8);
  for (int t = 0; t < 20; ++t) {
    std::vector<Matrix> p{random_matrix(3, 4, rng)};
    const std::vector<Matrix> g{random_matrix(3, 4, rng)};
    const double lr = 0.01 + rng.uniform();
    const Matrix before = p[0];
    SgdState s{0.0, 0.0, {}};
    sgd_step(p, g, s, lr);
    for (std::size_t i = 0; i < before.size(); ++i)
      CHECK(p[0].values()[i] == before.values()[i] - lr * g[0].values()[i]);
  }
}

TEST_CASE("sgd rejects non-finite gradients and bad learning rates") {
  std::vector<Matrix> p{Matrix::from_rows({{1.0}})};
  SgdState s;
  CHECK_THROWS_AS(sgd_step(p, std::vector<Matrix>{Matrix::from_rows({{NAN}})}, s, 0.1),
                  TrainingDiverged);
  CHECK(p[0].item() == 1.0);
  CHECK_THROWS_AS(sgd_step(p, std::vector<Matrix>{Matrix::from_rows({{1.0}})}, s, 0.0),
                  ContractViolation);
  CHECK_THROWS_AS(sgd_step(p, std::vector<Matrix>{Matrix(2, 1)}, s, 0.1), ContractViolation);
}

TEST_CASE("parallel kernels are bit-identical to the serial references") {
  Rng rng(17);
  for (std::size_t n : {3u, 40u, 130u}) {
    const Matrix a = random_matrix(n, n + 7, rng);
    const Matrix b = random_matrix(n + 7, n + 3, rng);
    Matrix s(n, n + 3), p(n, n + 3);
    kernels::serial::matmul(a, b, s);
    kernels::parallel::matmul(a, b, p);
    CHECK(s == p);

    const Matrix c = random_matrix(n, n + 3, rng);
    Matrix sat(n + 7, n + 3), pat(n + 7, n + 3);
    kernels::serial::matmul_at_b(a, c, sat);
    kernels::parallel::matmul_at_b(a, c, pat);
    CHECK(sat == pat);

    Matrix sbt(n, n + 7), pbt(n, n + 7);
    kernels::serial::matmul_a_bt(c, b, sbt);
    kernels::parallel::matmul_a_bt(c, b, pbt);
    CHECK(sbt == pbt);

    Matrix ssm(n, n + 7), psm(n, n + 7);
    kernels::serial::row_softmax(a, ssm);
    kernels::parallel::row_softmax(a, psm);
    CHECK(ssm == psm);

    const Matrix q = random_matrix(n / 2 + 1, n + 7, rng);
    Matrix spa(n * q.rows(), n + 7), ppa(n * q.rows(), n + 7);
    kernels::serial::pairwise_add(a, q, spa);
    kernels::parallel::pairwise_add(a, q, ppa);
    CHECK(spa == ppa);

    Matrix sgp(n, n + 7), sgq(q.rows(), n + 7), pgp(n, n + 7), pgq(q.rows(), n + 7);
    kernels::serial::pairwise_add_adjoint(spa, sgp, sgq);
    kernels::parallel::pairwise_add_adjoint(spa, pgp, pgq);
    CHECK(sgp == pgp);
    CHECK(sgq == pgq);
  }
}

TEST_CASE("matmul matches a naive triple loop") {
  Rng rng(23);
  const Matrix a = random_matrix(5, 6, rng), b = random_matrix(6, 4, rng);
  Matrix out(5, 4);
  kernels::serial::matmul(a, b, out);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < 6; ++k) acc += a(i, k) * b(k, j);
      CHECK(out(i, j) == doctest::Approx(acc).epsilon(1e-14));
    }
}

TEST_CASE("rng streams are deterministic and independent by name") {
  Rng a = stream(42, "data"), b = stream(42, "data"), c = stream(42, "init");
  bool differs = false;
  for (int i = 0; i < 10; ++i) {
    const double x = a.uniform();
    CHECK(x == b.uniform());
    differs = differs || x != c.uniform();
  }
  CHECK(differs);
  Rng r(1);
  for (int i = 0; i < 1000; ++i) {
    const double u = r.uniform();
    CHECK((u >= 0.0 && u < 1.0));
    CHECK(r.below(7) < 7u);
  }
}
