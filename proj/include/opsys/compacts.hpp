#pragma once

#include "opsys/maps.hpp"

// Finite truncation of the unitized compacts story: the operator system S_0
// spanned by the identity and all matrix units except E_11, the corner
// compression maps phi_n / psi_n, the dual and bidual positivity oracles in
// the trace pairing <(beta,T), lambda I + K> = beta lambda + tr(T^t K), and
// the multiplicative obstruction witness.
//
// The compact block is N x N; the ambient is M_{N+1}, with one extra
// coordinate standing in for the orthocomplement tail (so that the identity
// is not a finite sum of the retained matrix units).

namespace opsys {

struct TruncatedS0 {
  int truncation = 0;  // N
  SystemPtr system;    // in M_{N+1}, dimension N^2
};

TruncatedS0 build_s0(int truncation);

/// The full unitized compacts at the same truncation: span{I} + all E_ij,
/// i,j < N; dimension N^2 + 1.
SystemPtr build_s(int truncation);

/// Corner compression of an ambient matrix: top-left n x n block.
Matrix phi_n_apply(const Matrix& x, int n);

/// psi_n(Y) = V Y V* + y_11 Q_n inside the ambient of the given dimension.
Matrix psi_n_apply(const Matrix& y, int ambient_dim);

SystemMap phi_n_map(int truncation, int n);                 // M_{N+1} -> M_n
SystemMap psi_n_map(const TruncatedS0& s0, int n);          // M_n -> S_0

/// Operator-norm errors |X - (id (x) psi_n phi_n)(X)| along n_list.
std::vector<double> convergence_errors(const LevelElement& x, const std::vector<int>& n_list);

/// (beta, T) positive on the unitized compacts iff T PSD and beta >= tr T.
bool dual_positive_s(double beta, const Matrix& t, double tol = 1e-9);

struct DualS0Outcome {
  bool positive = false;
  double alpha = 0.0;  // minimal feasible diagonal completion when positive
};

/// (beta, T_0) with t_11 = 0 positive on S_0 iff some alpha in
/// [0, beta - tr T_0] makes T_0 + alpha E_11 PSD. Monotone in alpha;
/// the minimal alpha is located by bisection.
DualS0Outcome dual_positive_s0(double beta, const Matrix& t0, double tol = 1e-9);

/// (mu, X_0) with x_11 = 0: positive iff mu I + X_0 is PSD (tail included).
bool bidual_positive(double mu, const Matrix& x0, double tol = 1e-9);

struct BidualAuditRow {
  double mu = 0.0;
  bool oracle = false;
  bool mesh_violation = false;
  double worst_pairing = 0.0;
};

struct BidualAudit {
  std::vector<BidualAuditRow> rows;
  int disagreements = 0;  // oracle positive but a dual-positive pairing went negative
  bool consistent = true;
};

/// Compare the spectral oracle against the defining pairing condition over a
/// mesh of dual-positive functionals. The mesh can only falsify positivity.
BidualAudit bidual_equivalence_audit(int truncation, int samples, uint64_t seed);

struct ObstructionWitness {
  Matrix a, b, product;
  double residual = 0.0;
  int gen_a = 0, gen_b = 0;
};

/// Scan generator products for elements leaving the span. An empty list means
/// closed under the scanned products only, not an algebra proof.
std::vector<ObstructionWitness> algebra_obstruction(const MatrixOperatorSystem& s,
                                                    double residual_threshold = 0.1);

}  // namespace opsys
