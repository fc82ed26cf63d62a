#include "doctest.h"
#include "opsys/dense.hpp"

#include <Eigen/Cholesky>

using namespace opsys;

namespace {

// Characteristic-polynomial eigenvalue oracle: count eigenvalues below x by
// LDL^T inertia and bisect each one. Independent of the solver under test.
int eigs_below(const Matrix& a, double x) {
  Matrix shifted = a - x * Matrix::Identity(a.rows(), a.cols());
  Eigen::LDLT<Matrix> ldlt(shifted);
  int count = 0;
  for (Eigen::Index i = 0; i < ldlt.vectorD().size(); ++i)
    if (ldlt.vectorD()(i).real() < 0) ++count;
  return count;
}

RealVector bisection_eigs(const Matrix& a) {
  const int n = static_cast<int>(a.rows());
  double radius = 0;
  for (int i = 0; i < n; ++i) {
    double row = 0;
    for (int j = 0; j < n; ++j) row += std::abs(a(i, j));
    radius = std::max(radius, row);
  }
  RealVector out(n);
  for (int k = 0; k < n; ++k) {
    double lo = -radius - 1, hi = radius + 1;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      (eigs_below(a, mid) <= k ? lo : hi) = mid;
    }
    out(k) = 0.5 * (lo + hi);
  }
  return out;
}

}  // namespace

TEST_CASE("eig_herm on the identity") {
  const auto e = eig_herm(Matrix::Identity(3, 3));
  for (int i = 0; i < 3; ++i) CHECK(e.values(i) == doctest::Approx(1.0));
}

TEST_CASE("eig_herm sorts a diagonal matrix ascending") {
  Matrix a = Matrix::Zero(2, 2);
  a(0, 0) = 2;
  a(1, 1) = -3;
  const auto e = eig_herm(a);
  CHECK(e.values(0) == doctest::Approx(-3.0));
  CHECK(e.values(1) == doctest::Approx(2.0));
}

TEST_CASE("eig_herm matches the inertia-bisection oracle on random hermitians") {
  Rng rng(42);
  for (int trial = 0; trial < 5; ++trial) {
    Matrix a = rng.gaussian_herm(4);
    const auto e = eig_herm(a);
    const RealVector oracle = bisection_eigs(a);
    for (int i = 0; i < 4; ++i) CHECK(std::abs(e.values(i) - oracle(i)) <= 1e-8);
    // reconstruction
    Matrix rec = e.vectors * e.values.asDiagonal() * e.vectors.adjoint();
    CHECK((rec - a).norm() <= 1e-9 * (1 + a.norm()));
  }
}

TEST_CASE("eig_herm rejects non-hermitian input") {
  Matrix a = Matrix::Zero(2, 2);
  a(0, 1) = 1;  // strictly upper
  CHECK_THROWS_AS(eig_herm(a), NonHermitianError);
}

TEST_CASE("project_psd clips eigenvalues") {
  Matrix a = Matrix::Zero(2, 2);
  a(0, 0) = 1;
  a(1, 1) = -1;
  Matrix p = project_psd(a);
  CHECK(p(0, 0).real() == doctest::Approx(1.0));
  CHECK(p(1, 1).real() == doctest::Approx(0.0));
}

TEST_CASE("project_psd fixes PSD matrices and is idempotent") {
  Rng rng(7);
  Matrix g = rng.gaussian_matrix(3, 3);
  Matrix psd = g * g.adjoint();
  CHECK((project_psd(psd) - psd).norm() <= 1e-10 * (1 + psd.norm()));
  Matrix h = rng.gaussian_herm(3);
  Matrix p1 = project_psd(h);
  CHECK((project_psd(p1) - p1).norm() <= 1e-10);
}

TEST_CASE("project_psd beats random PSD perturbations in Frobenius distance") {
  Rng rng(11);
  Matrix h = rng.gaussian_herm(3);
  Matrix p = project_psd(h);
  const double best = (h - p).norm();
  for (int t = 0; t < 1000; ++t) {
    Matrix g = rng.gaussian_matrix(3, 3);
    Matrix cand = project_psd(p + 0.3 * rng.gaussian() * hermitian_part(g));
    CHECK(best <= (h - cand).norm() + 1e-12);
  }
}

TEST_CASE("kron and leg permutation agree") {
  Rng rng(3);
  Matrix a = rng.gaussian_matrix(2, 2);
  Matrix b = rng.gaussian_matrix(3, 3);
  Matrix ab = kron(a, b);
  Matrix ba = kron(b, a);
  CHECK((permute_legs(ab, {2, 3}, {1, 0}) - ba).norm() <= 1e-13);
}

TEST_CASE("partial trace of a kron factors the trace") {
  Rng rng(5);
  Matrix a = rng.gaussian_matrix(2, 2);
  Matrix b = rng.gaussian_matrix(3, 3);
  Matrix pt = partial_trace(kron(a, b), {2, 3}, {1});
  CHECK((pt - b.trace() * a).norm() <= 1e-12);
  Matrix pt0 = partial_trace(kron(a, b), {2, 3}, {0});
  CHECK((pt0 - a.trace() * b).norm() <= 1e-12);
}

TEST_CASE("hvec is a Frobenius isometry") {
  Rng rng(9);
  Matrix a = rng.gaussian_herm(4);
  Matrix b = rng.gaussian_herm(4);
  const RealVector va = hvec(a), vb = hvec(b);
  CHECK(va.dot(vb) == doctest::Approx((a * b).trace().real()).epsilon(1e-12));
  CHECK((unhvec(va.data(), 4) - a).norm() <= 1e-13);
}

TEST_CASE("rng determinism") {
  Rng a(123), b(123);
  for (int i = 0; i < 16; ++i) CHECK(a.gaussian() == b.gaussian());
}

TEST_CASE("nnls_gram solves small problems with active constraints") {
  // minimize |A c - y|^2, A = I (Gram = I): solution clips negatives
  RealMatrix g = RealMatrix::Identity(3, 3);
  RealVector b(3);
  b << 1.0, -2.0, 0.5;
  RealVector c = nnls_gram(g, b);
  CHECK(c(0) == doctest::Approx(1.0));
  CHECK(c(1) == doctest::Approx(0.0));
  CHECK(c(2) == doctest::Approx(0.5));
}

TEST_CASE("nnls_gram on correlated atoms") {
  RealMatrix a(3, 2);
  a << 1, 1, 0, 1, 0, 0;
  RealVector y(3);
  y << 2, 1, 0;
  RealMatrix g = a.transpose() * a;
  RealVector b = a.transpose() * y;
  RealVector c = nnls_gram(g, b);
  CHECK(c(0) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(c(1) == doctest::Approx(1.0).epsilon(1e-9));
}
