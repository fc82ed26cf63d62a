#include "doctest.h"
#include "opsys/feasibility.hpp"
#include "opsys/maps.hpp"

using namespace opsys;

namespace {

FeasibilityConstraint trace_constraint(int dim, double rhs) {
  FeasibilityConstraint c;
  c.coeff = {Matrix::Identity(dim, dim)};
  c.rhs = rhs;
  return c;
}

}  // namespace

TEST_CASE("scalar equality x = 1, x >= 0 is feasible") {
  FeasibilityProblem p;
  p.block_dims = {1};
  p.constraints.push_back(trace_constraint(1, 1.0));
  const auto out = solve_feasibility(p);
  REQUIRE(out.status == FeasibilityStatus::Feasible);
  CHECK(out.witness[0](0, 0).real() == doctest::Approx(1.0));
  CHECK(out.residual <= 1e-8);
}

TEST_CASE("negative trace of a PSD block is infeasible with a certificate") {
  FeasibilityProblem p;
  p.block_dims = {2};
  p.constraints.push_back(trace_constraint(2, -1.0));
  const auto out = solve_feasibility(p);
  REQUIRE(out.status == FeasibilityStatus::Infeasible);
  CHECK(out.residual >= 1e-8);  // margin
  // the multiplier combination must be NSD with positive value on the rhs
  REQUIRE(out.dual_certificate.size() == 1);
  Matrix comb = out.dual_certificate(0) * Matrix::Identity(2, 2);
  CHECK(max_eig(comb) <= 1e-8);
  CHECK(out.dual_certificate.dot(RealVector::Constant(1, -1.0)) > 0);
}

TEST_CASE("witness satisfies all constraints within the residual") {
  // random feasible instance: constrain three functionals to values attained
  // by a known PSD matrix
  Rng rng(21);
  Matrix g = rng.gaussian_matrix(3, 3);
  Matrix target = g * g.adjoint();
  FeasibilityProblem p;
  p.block_dims = {3};
  for (int i = 0; i < 3; ++i) {
    FeasibilityConstraint c;
    c.coeff = {rng.gaussian_herm(3)};
    c.rhs = constraint_value(c, {target});
    p.constraints.push_back(std::move(c));
  }
  const auto out = solve_feasibility(p);
  REQUIRE(out.status == FeasibilityStatus::Feasible);
  for (const auto& c : p.constraints)
    CHECK(std::abs(constraint_value(c, out.witness) - c.rhs) <= 1e-7);
  CHECK(min_eig(out.witness[0]) >= -out.residual - 1e-12);
}

TEST_CASE("Choi-extension instance for the identity on tri3 is feasible") {
  SystemPtr tri = tri3_system();
  SystemMap inc = inclusion_map(tri, full_matrix_system(3));
  // drop the certificate to force the feasibility route
  inc.cp_certificate.reset();
  SystemMap ext = arveson_extend(inc);
  for (int a = 0; a < tri->dim(); ++a)
    CHECK((ext.apply(tri->basis(a)) - tri->basis(a)).norm() <= 1e-7);
  CHECK(min_eig(*ext.cp_certificate) >= -1e-8);
}

TEST_CASE("two blocks with a coupling constraint") {
  FeasibilityProblem p;
  p.block_dims = {2, 2};
  FeasibilityConstraint c;
  c.coeff = {Matrix::Identity(2, 2), -Matrix::Identity(2, 2)};
  c.rhs = 0.0;  // tr X0 = tr X1
  p.constraints.push_back(std::move(c));
  FeasibilityConstraint c2;
  c2.coeff = {Matrix::Identity(2, 2), Matrix::Zero(2, 2)};
  c2.rhs = 3.0;
  p.constraints.push_back(std::move(c2));
  const auto out = solve_feasibility(p);
  REQUIRE(out.status == FeasibilityStatus::Feasible);
  CHECK(out.witness[0].trace().real() == doctest::Approx(3.0).epsilon(1e-6));
  CHECK(out.witness[1].trace().real() == doctest::Approx(3.0).epsilon(1e-6));
}

TEST_CASE("inconsistent affine constraints are infeasible outright") {
  FeasibilityProblem p;
  p.block_dims = {2};
  p.constraints.push_back(trace_constraint(2, 1.0));
  p.constraints.push_back(trace_constraint(2, 2.0));
  const auto out = solve_feasibility(p);
  CHECK(out.status == FeasibilityStatus::Infeasible);
}

TEST_CASE("dimension mismatches are rejected") {
  FeasibilityProblem p;
  p.block_dims = {2};
  FeasibilityConstraint c;
  c.coeff = {Matrix::Identity(3, 3)};
  c.rhs = 1.0;
  p.constraints.push_back(std::move(c));
  CHECK_THROWS_AS(solve_feasibility(p), DimensionMismatchError);
}

TEST_CASE("objective descent keeps feasibility") {
  FeasibilityProblem p;
  p.block_dims = {2};
  p.constraints.push_back(trace_constraint(2, 2.0));
  p.objective = {(Matrix(2, 2) << 1, 0, 0, -1).finished()};
  const auto out = solve_feasibility(p);
  REQUIRE(out.status == FeasibilityStatus::Feasible);
  CHECK(out.witness[0].trace().real() == doctest::Approx(2.0).epsilon(1e-6));
  CHECK(min_eig(out.witness[0]) >= -1e-7);
}

TEST_CASE("determinism: identical problems give identical outcomes") {
  Rng rng(5);
  FeasibilityProblem p;
  p.block_dims = {3};
  for (int i = 0; i < 2; ++i) {
    FeasibilityConstraint c;
    c.coeff = {rng.gaussian_herm(3)};
    c.rhs = 0.3 * i;
    p.constraints.push_back(std::move(c));
  }
  const auto a = solve_feasibility(p);
  const auto b = solve_feasibility(p);
  REQUIRE(a.status == b.status);
  if (a.status == FeasibilityStatus::Feasible)
    CHECK((a.witness[0] - b.witness[0]).norm() == 0.0);
}
