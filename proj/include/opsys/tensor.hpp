#pragma once

#include "opsys/maps.hpp"

// Min and max operator system tensor cones. The min cone is decided exactly
// in the ambient algebra; max-cone membership is certified by atomic
// decompositions alpha (P (x) Q) alpha* found with a fully corrective
// conditional-gradient search, and refuted (as evidence, never proof) by
// separating functionals passing sampled joint-positivity checks.

namespace opsys {

struct NotPositiveError : std::runtime_error {
  explicit NotPositiveError(const std::string& w) : std::runtime_error(w) {}
};

// ---- min cone ---------------------------------------------------------------

bool min_member(const TensorSystem& ts, const LevelElement& x, double tol = 1e-9);

struct StateSampleOutcome {
  bool positive = true;
  double worst_eig = 0.0;
  int witness_sample = -1;  // index of the falsifying UCP pair
  int witness_k = 0, witness_m = 0;
};

/// Necessary test from the state picture: [(phi (x) psi)(x_ij)] PSD for
/// sampled UCP maps into M_k, M_m with k, m up to the ambient dimensions.
StateSampleOutcome min_member_by_states(const TensorSystem& ts, const LevelElement& x,
                                        int samples, uint64_t seed, double tol = 1e-8);

// ---- max cone: atoms and decompositions --------------------------------------

struct MaxAtom {
  LevelElement p;  // in M_k(S)^+
  LevelElement q;  // in M_l(T)^+
  Matrix alpha;    // n x (k*l)

  int k() const { return p.level; }
  int l() const { return q.level; }
};

Matrix atom_realization(const TensorSystem& ts, const MaxAtom& a);

struct MaxDecomposition {
  std::vector<MaxAtom> atoms;
  double epsilon = 0.0;
  double residual = 0.0;
  int p_level_cap = 0;
  int q_level_cap = 0;
  uint64_t seed = 0;
};

/// Sum of atom realizations at the stated level.
Matrix decomposition_value(const TensorSystem& ts, const MaxDecomposition& d, int level);

/// Recompute the residual and atom invariants from scratch.
/// Returns the recomputed residual; flags violations through ok.
double verify_decomposition(const TensorSystem& ts, const LevelElement& x,
                            const MaxDecomposition& d, bool* ok, double atom_tol = 1e-9);

/// Atom-wise factor flip: certificate for the swapped element in T (x) S.
MaxDecomposition swap_decomposition(const MaxDecomposition& d);

struct CertifyOptions {
  int p_level_cap = 0;  // 0 -> ambient dim of S
  int q_level_cap = 0;  // 0 -> ambient dim of T
  int restarts = 8;
  int inner_iters = 10;
  int max_atoms = 400;
  int threads = 0;      // 0 -> OPSYS_THREADS env (default 1)
};

struct CertifyResult {
  bool success = false;
  MaxDecomposition decomposition;
  long iterations_used = 0;
  double residual = std::numeric_limits<double>::infinity();
  std::string note;
};

/// Search for X + eps * unit in D_n^max as a sum of atoms. Failure is a
/// budget statement, not a proof of non-membership.
CertifyResult max_certify(const TensorSystem& ts, const LevelElement& x, double eps,
                          long budget, uint64_t seed, CertifyOptions opt = {});

/// Exact single-atom decomposition of X in M_k(M_n (x) R)^+ when the left
/// factor is a full matrix algebra: P = [E_ij]_ij, Q = X reread in M_{nk}(R),
/// alpha the matrix-unit contraction. Throws NotPositiveError otherwise.
MaxDecomposition matrix_factor_decompose(const TensorSystem& ts, const LevelElement& x,
                                         double tol = 1e-8);

// ---- refutation ---------------------------------------------------------------

struct RefutationEvidence {
  RealVector functional;  // over the product coefficient basis, F(unit) = 1
  std::vector<std::pair<int, int>> checked_levels;
  double margin = 0.0;            // value on X, <= -margin requirement
  std::vector<double> level_min_eigs;  // worst pairing eigenvalue seen per level
  int mesh_size = 0;
  uint64_t seed = 0;
  bool exact_dual_side = false;   // a full factor allowed an exact CP check
};

struct RefuteResult {
  bool found = false;
  RefutationEvidence evidence;
  long iterations = 0;
};

/// F applied entrywise to a level element: [F(x_ij)].
Matrix functional_apply(const TensorSystem& ts, const RealVector& f, const LevelElement& x);

/// M(P,Q) = sum_ab F_ab K^P_a (x) K^Q_b; PSD for every positive pair iff F is
/// in the dual of the max cone.
Matrix functional_pairing(const TensorSystem& ts, const RealVector& f, const LevelElement& p,
                          const LevelElement& q);

RefuteResult max_refute(const TensorSystem& ts, const LevelElement& x,
                        const std::vector<std::pair<int, int>>& levels, int mesh_size,
                        uint64_t seed, double margin_scale = 1e-3);

/// Re-verify evidence on an independently seeded mesh (mesh_scale times larger).
bool verify_refutation(const TensorSystem& ts, const LevelElement& x,
                       const RefutationEvidence& ev, int mesh_scale, uint64_t seed,
                       double psd_tol = 1e-8, double margin_scale = 1e-3);

// ---- nuclearity reports ---------------------------------------------------------

enum class NuclearityVerdict { ConsistentWithNuclear, EvidenceAgainst, Inconclusive };

struct WitnessSearchResult {
  bool found = false;
  LevelElement x;
  RefutationEvidence evidence;
  CertifyResult certify_attempt;
  long rounds_used = 0;
};

/// Seesaw over (separating functional, min-cone boundary element).
WitnessSearchResult find_nonnuclearity_witness(const TensorSystem& ts,
                                               const std::vector<std::pair<int, int>>& levels,
                                               int mesh_size, int rounds, long certify_budget,
                                               uint64_t seed);

struct ElementOutcome {
  int level = 1;
  double eps = 0.0;
  bool certified = false;
  double residual = 0.0;
};

struct PartnerReport {
  SystemPtr partner;
  NuclearityVerdict verdict = NuclearityVerdict::Inconclusive;
  std::vector<ElementOutcome> outcomes;
  bool exact_route = false;  // a factor was full or one-dimensional
  std::optional<WitnessSearchResult> witness;
  std::string note;
};

struct NuclearityReport {
  std::vector<PartnerReport> partners;
  NuclearityVerdict aggregate = NuclearityVerdict::Inconclusive;
};

struct NuclearityOptions {
  int samples_per_level = 6;
  int mesh_size = 24;
  int seesaw_rounds = 6;
  std::vector<std::pair<int, int>> refute_levels = {{2, 2}, {3, 3}};
  CertifyOptions certify;
};

NuclearityReport nuclearity_report(SystemPtr s, const std::vector<SystemPtr>& partners,
                                   int n_max, long budget, uint64_t seed,
                                   NuclearityOptions opt = {});

}  // namespace opsys
