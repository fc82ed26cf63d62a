#pragma once

#include <memory>
#include <optional>

#include "opsys/dense.hpp"

// Concrete operator systems S inside M_d: unital, adjoint-closed subspaces
// carried by an orthogonal self-adjoint basis with basis(0) = I_d. Elements
// at matrix level n are stored as one n x n coefficient matrix per basis
// element; the realization is sum_a kron(coeff[a], basis(a)), level legs
// first.

namespace opsys {

class MatrixOperatorSystem {
 public:
  static MatrixOperatorSystem spanned_by(int d, const std::vector<Matrix>& generators);
  // basis must already be orthogonal self-adjoint with basis[0] = I_d
  static MatrixOperatorSystem with_orthogonal_basis(int d, std::vector<Matrix> basis,
                                                    std::vector<Matrix> generators);

  int ambient_dim() const { return d_; }
  int dim() const { return static_cast<int>(basis_.size()); }
  const Matrix& basis(int a) const { return basis_[static_cast<size_t>(a)]; }
  const std::vector<Matrix>& basis() const { return basis_; }
  double basis_norm2(int a) const { return norm2_(a); }
  bool is_full() const { return dim() == d_ * d_; }
  Matrix unit() const { return basis_[0]; }

  /// generators as given plus the unit; the scan set for product obstructions
  const std::vector<Matrix>& generators() const { return generators_; }
  /// generators exactly as passed to spanned_by (serialization round-trip)
  const std::vector<Matrix>& input_generators() const { return input_generators_; }

  Vector coefficients(const Matrix& a) const;
  Matrix realize(const Vector& coeffs) const;
  double span_residual(const Matrix& a) const;
  bool contains(const Matrix& a, double tol = 1e-9, double* residual = nullptr) const;

 private:
  int d_ = 0;
  std::vector<Matrix> basis_;
  RealVector norm2_;
  Matrix basis_flat_;  // d^2 x m, orthonormal columns vec(B_a)/|B_a|
  std::vector<Matrix> generators_;
  std::vector<Matrix> input_generators_;
  void finalize();
};

using SystemPtr = std::shared_ptr<const MatrixOperatorSystem>;

SystemPtr make_system(int d, const std::vector<Matrix>& generators);
SystemPtr full_matrix_system(int d);
SystemPtr span_identity_system(int d);
SystemPtr diagonal_system(int d);
SystemPtr tri3_system();  // span{E11,E12,E21,E22,E23,E32,E33} in M_3

// ---- elements at matrix levels ---------------------------------------------

struct LevelElement {
  SystemPtr system;
  int level = 0;
  std::vector<Matrix> coeff;  // one level x level matrix per basis element

  Matrix realize() const;
  bool hermitian(double tol = 1e-9) const;
  LevelElement adjoint() const;
  double frobenius_norm() const;  // of the realization

  LevelElement& operator+=(const LevelElement& o);
  LevelElement& operator-=(const LevelElement& o);
  LevelElement& operator*=(double s);
};
LevelElement operator+(LevelElement a, const LevelElement& b);
LevelElement operator-(LevelElement a, const LevelElement& b);
LevelElement operator*(double s, LevelElement a);

LevelElement zero_element(SystemPtr s, int level);
LevelElement unit_element(SystemPtr s, int level);  // I_n (x) 1_S
LevelElement element_from_realization(SystemPtr s, int level, const Matrix& x,
                                      double* span_residual = nullptr);
LevelElement scalar_element(SystemPtr s, const Matrix& a);  // level 1 from ambient matrix

/// Ambient positivity of the realization: min eigenvalue >= -tol.
bool cone_member(const LevelElement& x, double tol = 1e-9);
double cone_min_eig(const LevelElement& x);

/// Interior point of M_n(S)^+, deterministic in seed.
LevelElement random_positive(SystemPtr s, int level, uint64_t seed);
LevelElement random_hermitian_element(SystemPtr s, int level, Rng& rng);

/// Alternating projections between span(M_level(S)) and the PSD cone;
/// returns an element with small negative part near the input.
LevelElement cone_polish(const LevelElement& e, int rounds = 40);

/// Hermitian boundary point: shift a random hermitian element so its bottom
/// eigenvalue sits at zero.
LevelElement random_boundary_positive(SystemPtr s, int level, uint64_t seed);

/// Approximate argmax <gradient, Z> over {Z in M_level(S), Z PSD, tr Z = trace_target}.
/// Exact top-eigenvector step on full algebras, projected ascent otherwise.
LevelElement cone_linear_max(SystemPtr s, int level, const Matrix& gradient,
                             double trace_target, const LevelElement* warm, int iters);

// ---- tensor products --------------------------------------------------------

struct TensorSystem {
  SystemPtr left;     // S in M_p
  SystemPtr right;    // T in M_q
  SystemPtr product;  // basis kron(S_a, T_b) in M_{pq}, index a*dim(T)+b

  int index(int a, int b) const { return a * right->dim() + b; }
};

TensorSystem make_tensor_system(SystemPtr s, SystemPtr t);

/// P in M_k(S), Q in M_l(T) -> P (x) Q in M_{kl}(S (x) T); level legs (k, l).
LevelElement tensor_elements(const TensorSystem& ts, const LevelElement& p, const LevelElement& q);

/// The flip S (x) T -> T (x) S applied to a level element.
LevelElement swap_factors(const TensorSystem& ts, const TensorSystem& st, const LevelElement& x);

}  // namespace opsys
