#include <algorithm>

#include "doctest.h"
#include "opsys/system.hpp"

using namespace opsys;

namespace {

Matrix unit_at(int d, int i, int j) {
  Matrix e = Matrix::Zero(d, d);
  e(i, j) = 1;
  return e;
}

}  // namespace

TEST_CASE("adjoint closure: one offdiagonal generator spans a 3-dim system") {
  SystemPtr s = make_system(2, {unit_at(2, 0, 1)});
  CHECK(s->dim() == 3);
  CHECK((s->basis(0) - Matrix::Identity(2, 2)).norm() == 0.0);
  CHECK(s->contains(unit_at(2, 0, 1) + unit_at(2, 1, 0), 1e-9));
  CHECK(s->contains(Complex(0, 1) * (unit_at(2, 0, 1) - unit_at(2, 1, 0)), 1e-9));
}

TEST_CASE("tri3 has dimension 7 and excludes E_13") {
  SystemPtr tri = tri3_system();
  CHECK(tri->ambient_dim() == 3);
  CHECK(tri->dim() == 7);
  double res = 0.0;
  CHECK_FALSE(tri->contains(unit_at(3, 0, 2), 1e-9, &res));
  CHECK(res >= 0.9);  // E_13 is orthogonal to the span
  CHECK(tri->contains(Matrix::Identity(3, 3), 1e-9));
}

TEST_CASE("empty generators give span{I}") {
  SystemPtr s = make_system(2, {});
  CHECK(s->dim() == 1);
}

TEST_CASE("degenerate generators are deduplicated") {
  SystemPtr s = make_system(2, {unit_at(2, 0, 1), unit_at(2, 0, 1), Matrix::Identity(2, 2)});
  CHECK(s->dim() == 3);
}

TEST_CASE("random combinations project back with tiny residual") {
  SystemPtr tri = tri3_system();
  Rng rng(13);
  for (int t = 0; t < 20; ++t) {
    Vector c(tri->dim());
    for (int i = 0; i < c.size(); ++i) c(i) = rng.cgaussian();
    const Matrix a = tri->realize(c);
    double res = 0.0;
    CHECK(tri->contains(a, 1e-9, &res));
    CHECK(res <= 1e-12);
    CHECK((tri->coefficients(a) - c).norm() <= 1e-12);
  }
}

TEST_CASE("contains is invariant under a basis change of the same span") {
  std::vector<Matrix> gens = {unit_at(3, 0, 0), unit_at(3, 0, 1), unit_at(3, 1, 0),
                              unit_at(3, 1, 1), unit_at(3, 1, 2), unit_at(3, 2, 1),
                              unit_at(3, 2, 2)};
  std::vector<Matrix> shuffled = {gens[4], gens[2], gens[6], gens[0], gens[5], gens[1], gens[3]};
  SystemPtr a = make_system(3, gens);
  SystemPtr b = make_system(3, shuffled);
  Rng rng(19);
  for (int t = 0; t < 30; ++t) {
    Matrix m = rng.gaussian_herm(3);
    CHECK(a->contains(m, 1e-9) == b->contains(m, 1e-9));
  }
  CHECK(a->contains(unit_at(3, 0, 2), 1e-9) == b->contains(unit_at(3, 0, 2), 1e-9));
}

TEST_CASE("cone membership at level 1 and 2") {
  SystemPtr tri = tri3_system();
  CHECK(cone_member(unit_element(tri, 1)));
  // E12 + E21 has eigenvalue -1
  LevelElement h = scalar_element(tri, unit_at(3, 0, 1) + unit_at(3, 1, 0));
  CHECK_FALSE(cone_member(h));
  // shifted level-2 element is positive
  Rng rng(3);
  LevelElement x0 = random_hermitian_element(tri, 2, rng);
  const double lo = min_eig(x0.realize());
  LevelElement shifted = x0;
  shifted.coeff[0] += (std::abs(lo) + 1.0) * Matrix::Identity(2, 2);
  CHECK(cone_member(shifted));
}

TEST_CASE("cone_member requires hermitian input") {
  SystemPtr tri = tri3_system();
  LevelElement x = zero_element(tri, 1);
  x.coeff[1](0, 0) = Complex(0, 1);  // anti-hermitian coefficient
  CHECK_THROWS_AS(cone_member(x), NonHermitianError);
}

TEST_CASE("cone sums and scalings stay in the cone") {
  SystemPtr tri = tri3_system();
  for (uint64_t s = 0; s < 8; ++s) {
    LevelElement a = random_positive(tri, 2, 100 + s);
    LevelElement b = random_positive(tri, 2, 200 + s);
    CHECK(cone_member(a + b, 1e-8));
    CHECK(cone_member(1.7 * a, 1e-8));
  }
}

TEST_CASE("random_positive is deterministic and interior") {
  SystemPtr tri = tri3_system();
  LevelElement a = random_positive(tri, 2, 7);
  LevelElement b = random_positive(tri, 2, 7);
  double diff = 0;
  for (size_t i = 0; i < a.coeff.size(); ++i) diff += (a.coeff[i] - b.coeff[i]).norm();
  CHECK(diff == 0.0);
  CHECK(cone_member(a, 1e-9));
  SystemPtr triv = span_identity_system(1);
  LevelElement c = random_positive(triv, 1, 5);
  CHECK(c.coeff[0](0, 0).real() >= 0.0);
}

TEST_CASE("Archimedean property: minimal shift matches the bottom eigenvalue") {
  SystemPtr tri = tri3_system();
  Rng rng(31);
  LevelElement x = random_hermitian_element(tri, 2, rng);
  const double lo = min_eig(x.realize());
  // bisection on r in cone_member(x + r * unit)
  double a = 0.0, b = std::abs(lo) + 2.0;
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (a + b);
    LevelElement shifted = x;
    shifted.coeff[0] += mid * Matrix::Identity(2, 2);
    (cone_member(shifted, 0.0) ? b : a) = mid;
  }
  CHECK(std::abs(b - std::max(0.0, -lo)) <= 1e-8);
}

TEST_CASE("element_from_realization round-trips") {
  SystemPtr tri = tri3_system();
  LevelElement x = random_positive(tri, 2, 77);
  double res = 0.0;
  LevelElement y = element_from_realization(tri, 2, x.realize(), &res);
  CHECK(res <= 1e-10);
  CHECK((x.realize() - y.realize()).norm() <= 1e-10);
}

TEST_CASE("tensor system basics") {
  SystemPtr tri = tri3_system();
  SystemPtr m2 = full_matrix_system(2);
  TensorSystem ts = make_tensor_system(m2, tri);
  CHECK(ts.product->dim() == m2->dim() * tri->dim());
  CHECK(ts.product->ambient_dim() == 6);
  CHECK((ts.product->basis(0) - Matrix::Identity(6, 6)).norm() == 0.0);

  // realization of a tensor of elements matches the permuted kron
  LevelElement p = random_positive(m2, 2, 5);
  LevelElement q = random_positive(tri, 1, 6);
  LevelElement pq = tensor_elements(ts, p, q);
  Matrix direct = kron(p.realize(), q.realize());
  Matrix arranged = permute_legs(direct, {2, 2, 1, 3}, {0, 2, 1, 3});
  CHECK((pq.realize() - arranged).norm() <= 1e-10);
  CHECK(cone_member(pq, 1e-8));
}

TEST_CASE("swap_factors flips the ambient legs") {
  SystemPtr tri = tri3_system();
  SystemPtr m2 = full_matrix_system(2);
  TensorSystem ts = make_tensor_system(m2, tri);
  TensorSystem st = make_tensor_system(tri, m2);
  LevelElement x = random_positive(ts.product, 1, 9);
  LevelElement y = swap_factors(ts, st, x);
  Matrix flipped = permute_legs(x.realize(), {2, 3}, {1, 0});
  CHECK((y.realize() - flipped).norm() <= 1e-10);
}

TEST_CASE("cone_linear_max respects the trace cap and the cone") {
  SystemPtr tri = tri3_system();
  Rng rng(23);
  Matrix g = rng.gaussian_herm(6);
  LevelElement z = cone_linear_max(tri, 2, g, 6.0, nullptr, 12);
  CHECK(cone_member(z, 1e-8));
  CHECK(z.realize().trace().real() <= 6.0 + 1e-6);
  // the result correlates nonnegatively with the gradient direction when
  // the gradient has a positive part in the cone
  LevelElement probe = cone_linear_max(tri, 1, Matrix::Identity(3, 3), 3.0, nullptr, 12);
  CHECK(probe.realize().trace().real() == doctest::Approx(3.0).epsilon(1e-6));
}
