#pragma once

#include <optional>

#include "opsys/dense.hpp"

// Semidefinite feasibility by Dykstra alternating projections between the
// affine subspace cut out by the equality constraints and the product of PSD
// cones. Desk-scale: dense, deterministic, no external solver.

namespace opsys {

struct FeasibilityConstraint {
  std::vector<Matrix> coeff;  // one hermitian matrix per block
  double rhs = 0.0;           // value(X) = Re sum_b tr(coeff_b X_b)
};

struct FeasibilityProblem {
  std::vector<int> block_dims;
  std::vector<FeasibilityConstraint> constraints;
  std::vector<Matrix> objective;  // optional linear functional, minimized best-effort
};

enum class FeasibilityStatus { Feasible, Infeasible, Undecided };

struct FeasibilityOutcome {
  FeasibilityStatus status = FeasibilityStatus::Undecided;
  std::vector<Matrix> witness;    // Feasible: per-block values
  RealVector dual_certificate;    // Infeasible: constraint multipliers y
  double residual = 0.0;          // Feasible: max violation; Infeasible: margin
  double certificate_slack = 0.0; // Infeasible: row-span residual of the clipped direction
  int iterations = 0;
};

double constraint_value(const FeasibilityConstraint& c, const std::vector<Matrix>& blocks);

FeasibilityOutcome solve_feasibility(const FeasibilityProblem& p, double tol = 1e-8,
                                     int max_iter = 50000);

// Internal core: the same engine with an extra free (unconstrained-sign) real
// coordinate block appended before the hermitian blocks. Used by the
// refutation search to carry functional coordinates. Packed layout:
// [free | hvec(block_0) | hvec(block_1) | ...].
struct ConicProgram {
  int free_dim = 0;
  std::vector<int> block_dims;
  RealMatrix a;    // constraints x rows over packed coordinates
  RealVector rhs;
  RealVector objective;  // size 0 = none
};

struct ConicOutcome {
  FeasibilityStatus status = FeasibilityStatus::Undecided;
  RealVector x;               // packed solution when Feasible
  RealVector dual;            // multipliers when Infeasible
  double residual = 0.0;
  double certificate_slack = 0.0;
  int iterations = 0;
};

ConicOutcome solve_conic(const ConicProgram& p, double tol, int max_iter);

RealVector pack_blocks(const ConicProgram& p, const RealVector& free_part,
                       const std::vector<Matrix>& blocks);
std::vector<Matrix> unpack_blocks(const ConicProgram& p, const RealVector& x);

}  // namespace opsys
