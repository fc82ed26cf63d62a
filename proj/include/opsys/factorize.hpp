#pragma once

#include "opsys/tensor.hpp"

// The UCP-through-matrix-algebras pipeline: a restricted map plus an
// epsilon-multiple of a faithful state decomposes as alpha (f (x) Q) alpha*
// with f a CP map into matrices; support-projection normalization, CP
// extension and unitalization then produce UCP factors whose composition
// approximates the map on the chosen subsystem.

namespace opsys {

/// Element of E* (x) S: row a holds the S-coefficients of the image of the
/// a-th dual basis functional.
struct DualTensorElement {
  SystemPtr e;
  SystemPtr s;
  Matrix w;  // dim(E) x dim(S)
};

/// The inclusion E into S as a positive element of E* (x) S.
DualTensorElement inclusion_as_tensor_element(SystemPtr e, SystemPtr s);

/// Pairing against (evaluation at x in E) (x) (state with the given density on S).
Complex pair_with(const DualTensorElement& el, const Matrix& x, const Matrix& state_density);

/// The faithful state used as the Archimedean unit on E*: normalized trace.
double omega1(const SystemPtr& e, const Matrix& x);

struct MapAtom {
  SystemMap f;     // E -> M_r, CP, carries its Choi lift
  LevelElement q;  // in M_m(T)^+
  Matrix alpha;    // 1 x (r*m)
};

struct MapDecomposition {
  std::vector<MapAtom> atoms;
  double epsilon = 0.0;
  double residual = 0.0;  // aggregate Frobenius over the E basis
};

struct MapDecomposeResult {
  bool success = false;
  MapDecomposition decomposition;
  SystemMap f;     // direct-sum combination of the atoms: E -> M_R
  LevelElement q;  // in M_M(T)^+
  Matrix alpha;    // 1 x (R*M)
  long iterations = 0;
  std::string note;
};

/// Atom value on x: alpha (f(x) (x) Q) alpha* realized in the codomain ambient.
Matrix map_atom_value(const MapAtom& a, const SystemPtr& codomain, const Matrix& x);

/// Decompose Phi|_E + eps * omega_1(.) 1_T over atoms with the f-side ranging
/// over CP maps E -> M_r via their Choi lifts.
MapDecomposeResult decompose_restricted_map(const SystemMap& phi, SystemPtr e, double eps,
                                            long budget, uint64_t seed, CertifyOptions opt = {});

struct FactorizationStep {
  SystemPtr e;
  double eps = 0.0;
  int r = 0;
  SystemMap phi;  // S -> M_r, UCP
  SystemMap psi;  // M_r -> T, UCP
  RealVector basis_errors;  // |Phi(x) - psi(phi(x))| per E basis element, operator norm
  RealVector basis_norms;
  double max_error = 0.0;
  double decomposition_residual = 0.0;
  bool phi_ucp = false;
  bool psi_ucp = false;
};

std::vector<FactorizationStep> extract_factorization(
    const SystemMap& big_phi, const std::vector<std::pair<SystemPtr, double>>& schedule,
    long budget, uint64_t seed);

struct ConvergenceAudit {
  bool bounds_hold = true;        // every error <= (eps + 1e-6) |x|
  bool monotone_in_eps = true;    // fixed E, shrinking eps => no error growth
  std::vector<std::string> table;
};

ConvergenceAudit convergence_audit(const std::vector<FactorizationStep>& steps);

}  // namespace opsys
