#pragma once

#include "opsys/feasibility.hpp"
#include "opsys/system.hpp"

// Linear maps between operator systems over coefficient bases, Choi-matrix
// calculus, CP verification on subsystems via extension feasibility, and the
// support-projection / unitalization normal forms.

namespace opsys {

struct DomainNotFullError : std::runtime_error {
  explicit DomainNotFullError(const std::string& w) : std::runtime_error(w) {}
};
struct ZeroUnitImageError : std::runtime_error {
  explicit ZeroUnitImageError(const std::string& w) : std::runtime_error(w) {}
};
struct DefectNotPositiveError : std::runtime_error {
  explicit DefectNotPositiveError(const std::string& w) : std::runtime_error(w) {}
};
struct ExtensionSearchFailedError : std::runtime_error {
  explicit ExtensionSearchFailedError(const std::string& w, double residual)
      : std::runtime_error(w), residual(residual) {}
  double residual;
};

struct SystemMap {
  SystemPtr domain;
  SystemPtr codomain;
  Matrix action;  // codomain->dim() x domain->dim() over coefficient bases

  // PSD Choi matrix on M_{p*q} (p, q ambient dims) of a CP map on all of M_p
  // agreeing with this map on the domain, when one is known by construction.
  std::optional<Matrix> cp_certificate;

  Matrix apply(const Matrix& x) const;
  Vector apply_coeffs(const Vector& c) const;
  LevelElement apply_level(const LevelElement& x) const;
  Matrix apply_level_realized(const Matrix& xr, int level) const;
  bool unital(double tol = 1e-9) const;
  bool adjoint_preserving(double tol = 1e-10) const;
};

SystemMap identity_map(SystemPtr s);
SystemMap inclusion_map(SystemPtr subsystem, SystemPtr ambient_system);
SystemMap state_map(SystemPtr s, const Matrix& density);
SystemMap map_from_basis_images(SystemPtr domain, SystemPtr codomain,
                                const std::vector<Matrix>& images);
SystemMap compose(const SystemMap& second, const SystemMap& first);
SystemMap tensor_maps(const SystemMap& a, const SystemMap& b);

/// Choi matrix sum_ij E_ij (x) Phi(E_ij); requires a full matrix algebra domain.
Matrix choi_matrix(const SystemMap& m);
Matrix apply_choi(const Matrix& choi, const Matrix& x, int p, int q);
SystemMap map_from_choi(SystemPtr domain_full, SystemPtr codomain, const Matrix& choi);

bool is_cp_full(const SystemMap& m, double tol = 1e-9);

struct CpCertificate {
  enum class Kind { ExactMember, CertifiedMember, RefutedAtLevel, Undecided };
  Kind kind = Kind::Undecided;
  Matrix choi;            // ExactMember / CertifiedMember
  double choi_min_eig = 0.0;
  double agreement_residual = 0.0;
  LevelElement witness;   // RefutedAtLevel: P in M_k(S)^+ with Phi^(k)(P) not PSD
  int witness_level = 0;
  double witness_min_eig = 0.0;
  int levels_scanned = 0; // completeness assumption: scan stops at the ambient dim
  int iterations = 0;

  bool certified() const {
    return kind == Kind::ExactMember || kind == Kind::CertifiedMember;
  }
};

/// CP decision for maps defined on an operator subsystem of M_p. Exact on
/// full domains (Choi eigenvalue test); otherwise decided by PSD-extension
/// feasibility, with a refutation witness searched at levels 1..p.
CpCertificate is_cp_subsystem(const SystemMap& m, double tol = 1e-8, int budget = 50000,
                              uint64_t seed = 0);

/// CP extension of a CP map on S to all of M_p (values in the same codomain).
/// choi_hint, when given and valid, is used directly.
SystemMap arveson_extend(const SystemMap& m, double tol = 1e-8, int budget = 50000,
                         std::optional<Matrix> choi_hint = std::nullopt);

struct UcpNormalization {
  SystemMap ucp;              // f~ : E -> M_r, unital
  int rank = 0;               // r = rank of f(1)
  Matrix unit_image;          // f(1)
  Matrix basis_change;        // U with U* P U = I_r + 0
  Matrix support_projection;  // P
  Matrix sqrt_unit;           // f(1)^{1/2}
  Matrix invsqrt_unit;        // f(1)^{-1/2} on the support
  Matrix left_factor;         // B = f(1)^{1/2} U [I_r; 0], so f(x) = B f~(x) B*
};

/// Support-projection compression of a CP map with f(1) != 0 to a UCP map.
UcpNormalization normalize_to_ucp(const SystemMap& f, double rank_cutoff = 1e-8);

/// f(x) reconstructed from the normalization: B f~(x) B*.
Matrix reassemble_from_normalization(const UcpNormalization& n, const Matrix& x);

/// psi = psi'/|psi'| + omega(.)(1_T - psi'(I)/|psi'|); omega given by a density
/// matrix on the full matrix-algebra domain. |psi'| is taken at the unit.
SystemMap unitalize_psi(const SystemMap& psi_prime, const Matrix& state_density,
                        double tol = 1e-8);

/// Restriction to S of a Stinespring-random UCP map on the ambient algebra.
SystemMap random_ucp_to_matrices(SystemPtr s, int k, uint64_t seed);

double map_norm_at_unit(const SystemMap& m);

/// Unitality + certified complete positivity.
bool verify_ucp(const SystemMap& m, double tol = 1e-8);

}  // namespace opsys
