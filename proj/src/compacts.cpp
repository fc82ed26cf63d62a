#include "opsys/compacts.hpp"

#include <cmath>

namespace opsys {

namespace {

Matrix matrix_unit(int d, int i, int j) {
  Matrix e = Matrix::Zero(d, d);
  e(i, j) = 1;
  return e;
}

}  // namespace

TruncatedS0 build_s0(int truncation) {
  if (truncation < 2) throw std::invalid_argument("build_s0: truncation must be >= 2");
  const int d = truncation + 1;
  std::vector<Matrix> gens;
  for (int i = 0; i < truncation; ++i)
    for (int j = 0; j < truncation; ++j) {
      if (i == 0 && j == 0) continue;
      gens.push_back(matrix_unit(d, i, j));
    }
  TruncatedS0 s0;
  s0.truncation = truncation;
  s0.system = make_system(d, gens);
  return s0;
}

SystemPtr build_s(int truncation) {
  if (truncation < 2) throw std::invalid_argument("build_s: truncation must be >= 2");
  const int d = truncation + 1;
  std::vector<Matrix> gens;
  for (int i = 0; i < truncation; ++i)
    for (int j = 0; j < truncation; ++j) gens.push_back(matrix_unit(d, i, j));
  return make_system(d, gens);
}

Matrix phi_n_apply(const Matrix& x, int n) {
  if (n > x.rows()) throw DimensionMismatchError("phi_n_apply: corner exceeds matrix");
  return x.topLeftCorner(n, n);
}

Matrix psi_n_apply(const Matrix& y, int ambient_dim) {
  const int n = static_cast<int>(y.rows());
  if (n > ambient_dim) throw DimensionMismatchError("psi_n_apply: block exceeds ambient");
  Matrix out = Matrix::Zero(ambient_dim, ambient_dim);
  out.topLeftCorner(n, n) = y;
  for (int i = n; i < ambient_dim; ++i) out(i, i) = y(0, 0);
  return out;
}

SystemMap phi_n_map(int truncation, int n) {
  const int d = truncation + 1;
  if (n > d) throw DimensionMismatchError("phi_n_map: corner exceeds ambient");
  SystemPtr dom = full_matrix_system(d);
  std::vector<Matrix> images;
  for (int a = 0; a < dom->dim(); ++a) images.push_back(phi_n_apply(dom->basis(a), n));
  SystemMap m = map_from_basis_images(dom, full_matrix_system(n), images);
  Matrix c = Matrix::Zero(d * n, d * n);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      c += kron(matrix_unit(d, i, j), phi_n_apply(matrix_unit(d, i, j), n));
  m.cp_certificate = c;
  return m;
}

SystemMap psi_n_map(const TruncatedS0& s0, int n) {
  const int d = s0.truncation + 1;
  if (n > s0.truncation) throw DimensionMismatchError("psi_n_map: block exceeds truncation");
  SystemPtr dom = full_matrix_system(n);
  std::vector<Matrix> images;
  for (int a = 0; a < dom->dim(); ++a) images.push_back(psi_n_apply(dom->basis(a), d));
  SystemMap m = map_from_basis_images(dom, s0.system, images);
  Matrix c = Matrix::Zero(n * d, n * d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      c += kron(matrix_unit(n, i, j), psi_n_apply(matrix_unit(n, i, j), d));
  m.cp_certificate = hermitian_part(c);
  return m;
}

std::vector<double> convergence_errors(const LevelElement& x, const std::vector<int>& n_list) {
  const int d = x.system->ambient_dim();
  const int m = x.level;
  const Matrix xr = x.realize();
  std::vector<double> errors;
  errors.reserve(n_list.size());
  for (int n : n_list) {
    Matrix approx = Matrix::Zero(m * d, m * d);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j)
        approx.block(i * d, j * d, d, d) =
            psi_n_apply(phi_n_apply(xr.block(i * d, j * d, d, d), n), d);
    errors.push_back(op_norm(xr - approx));
  }
  return errors;
}

bool dual_positive_s(double beta, const Matrix& t, double tol) {
  if (herm_residual(t) > 1e-8) throw NonHermitianError("dual_positive_s: T is not hermitian");
  return min_eig(t) >= -tol && beta >= t.trace().real() - tol;
}

DualS0Outcome dual_positive_s0(double beta, const Matrix& t0, double tol) {
  if (herm_residual(t0) > 1e-8) throw NonHermitianError("dual_positive_s0: T_0 is not hermitian");
  if (std::abs(t0(0, 0)) > 1e-10)
    throw std::invalid_argument("dual_positive_s0: t_11 must vanish");
  DualS0Outcome out;
  const double upper = beta - t0.trace().real();
  if (upper < -tol) return out;
  const double hi = std::max(upper, 0.0);
  Matrix e00 = Matrix::Zero(t0.rows(), t0.cols());
  e00(0, 0) = 1;
  auto feasible = [&](double a) { return min_eig(t0 + a * e00) >= -tol; };
  if (!feasible(hi)) return out;  // PSD-ness is monotone increasing in alpha
  out.positive = true;
  double lo = 0.0, up = hi;
  if (feasible(0.0)) {
    out.alpha = 0.0;
    return out;
  }
  while (up - lo > 1e-10) {
    const double mid = 0.5 * (lo + up);
    (feasible(mid) ? up : lo) = mid;
  }
  out.alpha = up;
  return out;
}

bool bidual_positive(double mu, const Matrix& x0, double tol) {
  if (herm_residual(x0) > 1e-8) throw NonHermitianError("bidual_positive: X_0 is not hermitian");
  if (std::abs(x0(0, 0)) > 1e-10)
    throw std::invalid_argument("bidual_positive: x_11 must vanish");
  const int n = static_cast<int>(x0.rows());
  Matrix m = Matrix::Zero(n + 1, n + 1);
  m.topLeftCorner(n, n) = x0;
  m += mu * Matrix::Identity(n + 1, n + 1);
  return min_eig(m) >= -tol;
}

BidualAudit bidual_equivalence_audit(int truncation, int samples, uint64_t seed) {
  BidualAudit audit;
  const int n = truncation;
  Rng rng(seed);
  const int mesh_per_sample = 40;

  for (int s = 0; s < samples; ++s) {
    Matrix x0 = rng.gaussian_herm(n);
    x0(0, 0) = 0;
    // mix exact-boundary, interior and indefinite samples
    double mu;
    const int kind = s % 3;
    Matrix probe = Matrix::Zero(n + 1, n + 1);
    probe.topLeftCorner(n, n) = x0;
    const double lo = min_eig(probe);
    if (kind == 0)
      mu = -lo + std::abs(rng.gaussian());  // strictly positive
    else if (kind == 1)
      mu = -lo;  // boundary
    else
      mu = -lo - 0.2 - std::abs(rng.gaussian());  // indefinite

    BidualAuditRow row;
    row.mu = mu;
    row.oracle = bidual_positive(mu, x0, 1e-9);
    row.worst_pairing = std::numeric_limits<double>::infinity();

    for (int t = 0; t < mesh_per_sample; ++t) {
      Matrix g = rng.gaussian_matrix(n, n);
      Matrix tt = g * g.adjoint();
      tt /= std::max(tt.trace().real(), 1e-12);
      Matrix t0 = tt;  // alpha = tt(0,0) completes t0 back to the PSD tt
      t0(0, 0) = 0;
      const double beta = tt.trace().real() + rng.uniform();
      // pairing mu*beta + sum_{(i,j) != (1,1)} x_ij t_ij
      const double pairing = mu * beta + x0.cwiseProduct(t0).sum().real();
      row.worst_pairing = std::min(row.worst_pairing, pairing);
    }
    row.mesh_violation = row.worst_pairing < -1e-8 * (1 + std::abs(mu));
    if (row.oracle && row.mesh_violation) {
      ++audit.disagreements;
      audit.consistent = false;
    }
    audit.rows.push_back(row);
  }
  return audit;
}

std::vector<ObstructionWitness> algebra_obstruction(const MatrixOperatorSystem& s,
                                                    double residual_threshold) {
  std::vector<ObstructionWitness> witnesses;
  const auto& gens = s.generators();
  for (size_t i = 0; i < gens.size(); ++i)
    for (size_t j = 0; j < gens.size(); ++j) {
      const Matrix prod = gens[i] * gens[j];
      double res = 0.0;
      if (!s.contains(prod, 1e-9, &res) && res >= residual_threshold) {
        ObstructionWitness w;
        w.a = gens[i];
        w.b = gens[j];
        w.product = prod;
        w.residual = res;
        w.gen_a = static_cast<int>(i);
        w.gen_b = static_cast<int>(j);
        witnesses.push_back(std::move(w));
      }
    }
  return witnesses;
}

}  // namespace opsys
