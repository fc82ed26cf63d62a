#pragma once

#include <Eigen/Dense>
#include <complex>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

// Dense hermitian linear algebra used by every other header.
//
// Conventions kept throughout the library:
//   * scalars are std::complex<double>, matrices Eigen::MatrixXcd;
//   * kron(A, B) indexes big-endian: row (i_A, i_B) -> i_A * rows(B) + i_B;
//   * a matrix over tensor legs (d_0, ..., d_{n-1}) uses the same flattening.

namespace opsys {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;
using RealMatrix = Eigen::MatrixXd;
using RealVector = Eigen::VectorXd;

template <typename Scalar>
using DenseMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

struct NonHermitianError : std::runtime_error {
  explicit NonHermitianError(const std::string& what) : std::runtime_error(what) {}
};
struct DimensionMismatchError : std::runtime_error {
  explicit DimensionMismatchError(const std::string& what) : std::runtime_error(what) {}
};

/// max |A_ij - conj(A_ji)|
template <typename Derived>
double herm_residual(const Eigen::MatrixBase<Derived>& a) {
  if (a.rows() != a.cols()) return std::numeric_limits<double>::infinity();
  return (a.derived() - a.derived().adjoint().eval()).cwiseAbs().maxCoeff();
}

template <typename Derived>
DenseMatrix<typename Derived::Scalar> hermitian_part(const Eigen::MatrixBase<Derived>& a) {
  return (a.derived() + a.derived().adjoint().eval()) / 2.0;
}

template <typename DA, typename DB>
DenseMatrix<typename DA::Scalar> kron(const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& b) {
  DenseMatrix<typename DA::Scalar> out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b.derived();
  return out;
}

struct EigResult {
  RealVector values;  // ascending
  Matrix vectors;     // unitary columns, A = V diag(values) V*
};

/// Hermitian eigendecomposition. Throws NonHermitianError when the symmetry
/// residual exceeds herm_tol.
EigResult eig_herm(const Matrix& a, double herm_tol = 1e-8);

double min_eig(const Matrix& a, double herm_tol = 1e-8);
double max_eig(const Matrix& a, double herm_tol = 1e-8);

/// Frobenius-nearest PSD matrix (eigenvalue clipping).
Matrix project_psd(const Matrix& a, double herm_tol = 1e-8);

/// Largest singular value. For hermitian input this equals max |eig|.
double op_norm(const Matrix& a);

Matrix identity(int d);

// ---- tensor-leg utilities ------------------------------------------------

/// Permute the legs of a square matrix over C^{d_0} x ... x C^{d_{n-1}}.
/// perm[j] = index of the old leg placed at new position j.
Matrix permute_legs(const Matrix& m, const std::vector<int>& dims, const std::vector<int>& perm);

/// Trace out the listed legs (indices into dims).
Matrix partial_trace(const Matrix& m, const std::vector<int>& dims, const std::vector<int>& traced);

// ---- deterministic sampling ----------------------------------------------

uint64_t derive_seed(uint64_t seed, uint64_t salt);

/// Deterministic RNG with hand-rolled gaussians so that streams are stable
/// across standard library implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}
  double uniform();   // [0, 1)
  double gaussian();  // N(0, 1)
  Complex cgaussian();
  Matrix gaussian_matrix(int rows, int cols);
  Matrix gaussian_herm(int n);
  int uniform_int(int lo, int hi);  // inclusive bounds

 private:
  std::mt19937_64 gen_;
};

// ---- packing of hermitian blocks into real coordinates --------------------
// Isometric w.r.t. the Frobenius inner product: diagonal entries, then
// sqrt(2)*Re / sqrt(2)*Im of the strict upper triangle.

int hvec_dim(int d);
void hvec_into(const Matrix& a, double* out);
RealVector hvec(const Matrix& a);
Matrix unhvec(const double* in, int d);

/// Nonnegative least squares on the normal equations: minimize
/// 1/2 c^T G c - b^T c over c >= 0, G PSD. Lawson-Hanson active set.
RealVector nnls_gram(const RealMatrix& gram, const RealVector& b, int max_iter = 0);

}  // namespace opsys
