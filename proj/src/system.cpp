#include "opsys/system.hpp"

#include <cmath>

namespace opsys {

namespace {

Vector vec(const Matrix& a) {
  return Eigen::Map<const Vector>(a.data(), a.size());
}

}  // namespace

void MatrixOperatorSystem::finalize() {
  const int m = dim();
  norm2_.resize(m);
  basis_flat_.resize(d_ * d_, m);
  for (int a = 0; a < m; ++a) {
    norm2_(a) = basis_[static_cast<size_t>(a)].squaredNorm();
    basis_flat_.col(a) = vec(basis_[static_cast<size_t>(a)]) / std::sqrt(norm2_(a));
  }
}

MatrixOperatorSystem MatrixOperatorSystem::with_orthogonal_basis(int d, std::vector<Matrix> basis,
                                                                 std::vector<Matrix> generators) {
  MatrixOperatorSystem s;
  s.d_ = d;
  s.basis_ = std::move(basis);
  s.generators_ = std::move(generators);
  s.finalize();
  return s;
}

MatrixOperatorSystem MatrixOperatorSystem::spanned_by(int d, const std::vector<Matrix>& generators) {
  if (d < 1) throw std::invalid_argument("spanned_by: ambient dimension must be >= 1");
  for (const auto& g : generators)
    if (g.rows() != d || g.cols() != d)
      throw DimensionMismatchError("spanned_by: generator has wrong dimension");

  // self-adjoint candidates: I, then hermitian and antihermitian parts
  std::vector<Matrix> candidates;
  candidates.push_back(Matrix::Identity(d, d));
  const Complex i2(0, 2);
  for (const auto& g : generators) {
    candidates.push_back((g + g.adjoint()) / 2.0);
    candidates.push_back((g - g.adjoint()) / i2);
  }

  // Gram-Schmidt under the trace inner product; basis[0] stays I_d
  std::vector<Matrix> basis;
  for (size_t c = 0; c < candidates.size(); ++c) {
    Matrix r = candidates[c];
    const double scale = 1.0 + r.norm();
    for (const auto& b : basis) {
      const Complex coef = (b.adjoint() * r).trace() / b.squaredNorm();
      r -= coef * b;
    }
    if (r.norm() <= 1e-10 * scale) continue;  // degenerate / duplicate
    if (c > 0) r /= r.norm();
    basis.push_back(hermitian_part(r));
  }

  MatrixOperatorSystem s;
  s.d_ = d;
  s.basis_ = std::move(basis);
  s.input_generators_ = generators;
  s.generators_.push_back(Matrix::Identity(d, d));
  for (const auto& g : generators) s.generators_.push_back(g);
  s.finalize();
  return s;
}

Vector MatrixOperatorSystem::coefficients(const Matrix& a) const {
  if (a.rows() != d_ || a.cols() != d_)
    throw DimensionMismatchError("coefficients: ambient dimension mismatch");
  Vector c = basis_flat_.adjoint() * vec(a);
  for (int i = 0; i < c.size(); ++i) c(i) /= std::sqrt(norm2_(i));
  return c;
}

Matrix MatrixOperatorSystem::realize(const Vector& coeffs) const {
  if (coeffs.size() != dim())
    throw DimensionMismatchError("realize: coefficient count mismatch");
  Matrix out = Matrix::Zero(d_, d_);
  for (int a = 0; a < dim(); ++a) out += coeffs(a) * basis_[static_cast<size_t>(a)];
  return out;
}

double MatrixOperatorSystem::span_residual(const Matrix& a) const {
  return (a - realize(coefficients(a))).norm();
}

bool MatrixOperatorSystem::contains(const Matrix& a, double tol, double* residual) const {
  const double r = span_residual(a);
  if (residual) *residual = r;
  return r <= tol;
}

SystemPtr make_system(int d, const std::vector<Matrix>& generators) {
  return std::make_shared<MatrixOperatorSystem>(MatrixOperatorSystem::spanned_by(d, generators));
}

SystemPtr full_matrix_system(int d) {
  std::vector<Matrix> gens;
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      Matrix e = Matrix::Zero(d, d);
      e(i, j) = 1;
      gens.push_back(e);
    }
  return make_system(d, gens);
}

SystemPtr span_identity_system(int d) { return make_system(d, {}); }

SystemPtr diagonal_system(int d) {
  std::vector<Matrix> gens;
  for (int i = 0; i < d; ++i) {
    Matrix e = Matrix::Zero(d, d);
    e(i, i) = 1;
    gens.push_back(e);
  }
  return make_system(d, gens);
}

SystemPtr tri3_system() {
  std::vector<Matrix> gens;
  auto unit = [](int i, int j) {
    Matrix e = Matrix::Zero(3, 3);
    e(i, j) = 1;
    return e;
  };
  gens.push_back(unit(0, 0));
  gens.push_back(unit(0, 1));
  gens.push_back(unit(1, 0));
  gens.push_back(unit(1, 1));
  gens.push_back(unit(1, 2));
  gens.push_back(unit(2, 1));
  gens.push_back(unit(2, 2));
  return make_system(3, gens);
}

// ---- LevelElement -----------------------------------------------------------

Matrix LevelElement::realize() const {
  const int d = system->ambient_dim();
  Matrix out = Matrix::Zero(level * d, level * d);
  for (int a = 0; a < system->dim(); ++a)
    out += kron(coeff[static_cast<size_t>(a)], system->basis(a));
  return out;
}

bool LevelElement::hermitian(double tol) const {
  for (const auto& k : coeff)
    if (herm_residual(k) > tol) return false;
  return true;
}

LevelElement LevelElement::adjoint() const {
  LevelElement out = *this;
  for (auto& k : out.coeff) k = k.adjoint().eval();
  return out;
}

double LevelElement::frobenius_norm() const {
  double acc = 0;
  for (int a = 0; a < system->dim(); ++a)
    acc += coeff[static_cast<size_t>(a)].squaredNorm() * system->basis_norm2(a);
  return std::sqrt(acc);
}

LevelElement& LevelElement::operator+=(const LevelElement& o) {
  for (size_t a = 0; a < coeff.size(); ++a) coeff[a] += o.coeff[a];
  return *this;
}
LevelElement& LevelElement::operator-=(const LevelElement& o) {
  for (size_t a = 0; a < coeff.size(); ++a) coeff[a] -= o.coeff[a];
  return *this;
}
LevelElement& LevelElement::operator*=(double s) {
  for (auto& k : coeff) k *= s;
  return *this;
}
LevelElement operator+(LevelElement a, const LevelElement& b) { return a += b; }
LevelElement operator-(LevelElement a, const LevelElement& b) { return a -= b; }
LevelElement operator*(double s, LevelElement a) { return a *= s; }

LevelElement zero_element(SystemPtr s, int level) {
  LevelElement e;
  e.system = std::move(s);
  e.level = level;
  e.coeff.assign(static_cast<size_t>(e.system->dim()), Matrix::Zero(level, level));
  return e;
}

LevelElement unit_element(SystemPtr s, int level) {
  LevelElement e = zero_element(std::move(s), level);
  e.coeff[0] = Matrix::Identity(level, level);
  return e;
}

LevelElement element_from_realization(SystemPtr s, int level, const Matrix& x,
                                      double* span_residual) {
  const int d = s->ambient_dim();
  if (x.rows() != level * d || x.cols() != level * d)
    throw DimensionMismatchError("element_from_realization: size mismatch");
  LevelElement e = zero_element(s, level);
  for (int a = 0; a < s->dim(); ++a) {
    const Matrix& b = s->basis(a);
    const double n2 = s->basis_norm2(a);
    Matrix k(level, level);
    for (int i = 0; i < level; ++i)
      for (int j = 0; j < level; ++j)
        k(i, j) = (b.adjoint() * x.block(i * d, j * d, d, d)).trace() / n2;
    e.coeff[static_cast<size_t>(a)] = k;
  }
  if (span_residual) *span_residual = (x - e.realize()).norm();
  return e;
}

LevelElement scalar_element(SystemPtr s, const Matrix& a) {
  LevelElement e = zero_element(std::move(s), 1);
  Vector c = e.system->coefficients(a);
  for (int i = 0; i < c.size(); ++i) e.coeff[static_cast<size_t>(i)](0, 0) = c(i);
  return e;
}

bool cone_member(const LevelElement& x, double tol) {
  if (!x.hermitian(1e-8))
    throw NonHermitianError("cone_member: element is not hermitian");
  return min_eig(x.realize()) >= -tol;
}

double cone_min_eig(const LevelElement& x) { return min_eig(x.realize(), 1e-6); }

LevelElement random_hermitian_element(SystemPtr s, int level, Rng& rng) {
  LevelElement e = zero_element(std::move(s), level);
  for (auto& k : e.coeff) k = rng.gaussian_herm(level);
  return e;
}

LevelElement random_positive(SystemPtr s, int level, uint64_t seed) {
  Rng rng(seed);
  LevelElement e = random_hermitian_element(std::move(s), level, rng);
  const double lo = min_eig(e.realize());
  const double shift = std::abs(std::min(lo, 0.0)) + rng.uniform();
  e.coeff[0] += shift * Matrix::Identity(level, level);
  return e;
}

LevelElement cone_polish(const LevelElement& e, int rounds) {
  LevelElement cur = e;
  for (auto& k : cur.coeff) k = hermitian_part(k);
  for (int r = 0; r < rounds; ++r) {
    Matrix psd = project_psd(cur.realize(), 1e-4);
    double resid = 0.0;
    cur = element_from_realization(cur.system, cur.level, psd, &resid);
    for (auto& k : cur.coeff) k = hermitian_part(k);
    if (resid <= 1e-13) break;
  }
  return cur;
}

LevelElement random_boundary_positive(SystemPtr s, int level, uint64_t seed) {
  Rng rng(seed);
  LevelElement e = random_hermitian_element(std::move(s), level, rng);
  const double lo = min_eig(e.realize());
  e.coeff[0] -= lo * Matrix::Identity(level, level);
  return e;
}

LevelElement cone_linear_max(SystemPtr s, int level, const Matrix& gradient,
                             double trace_target, const LevelElement* warm, int iters) {
  const Matrix g = hermitian_part(gradient);
  if (s->is_full()) {
    const auto eig = eig_herm(g, 1e-6);
    const int top = static_cast<int>(eig.values.size()) - 1;
    LevelElement out = zero_element(s, level);
    if (eig.values(top) > 0) {
      const Vector v = eig.vectors.col(top);
      out = element_from_realization(s, level, trace_target * (v * v.adjoint()));
    } else {
      out = unit_element(s, level);
      out *= trace_target / (level * s->ambient_dim());
    }
    return out;
  }

  LevelElement z = warm ? *warm : unit_element(s, level);
  const double gn = g.norm();
  const double step = trace_target / (gn > 1e-14 ? gn : 1.0);
  double best_val = -std::numeric_limits<double>::infinity();
  LevelElement best = z;
  for (int it = 0; it < iters; ++it) {
    Matrix w = z.realize() + step * g;
    z = cone_polish(element_from_realization(s, level, w), 12);
    const double tr = z.realize().trace().real();
    if (tr > 1e-12)
      z *= trace_target / tr;
    else
      z = unit_element(s, level), z *= trace_target / (level * s->ambient_dim());
    const double val = (g.adjoint() * z.realize()).trace().real();
    if (val > best_val) {
      best_val = val;
      best = z;
    }
  }
  best = cone_polish(best, 40);
  const double tr = best.realize().trace().real();
  if (tr > trace_target && tr > 1e-12) best *= trace_target / tr;
  return best;
}

// ---- tensor systems ---------------------------------------------------------

TensorSystem make_tensor_system(SystemPtr s, SystemPtr t) {
  std::vector<Matrix> basis;
  basis.reserve(static_cast<size_t>(s->dim()) * static_cast<size_t>(t->dim()));
  for (int a = 0; a < s->dim(); ++a)
    for (int b = 0; b < t->dim(); ++b) basis.push_back(kron(s->basis(a), t->basis(b)));
  std::vector<Matrix> gens;
  gens.push_back(Matrix::Identity(s->ambient_dim() * t->ambient_dim(),
                                  s->ambient_dim() * t->ambient_dim()));
  for (const auto& gs : s->generators())
    for (const auto& gt : t->generators()) gens.push_back(kron(gs, gt));
  TensorSystem ts;
  ts.left = std::move(s);
  ts.right = std::move(t);
  ts.product = std::make_shared<MatrixOperatorSystem>(MatrixOperatorSystem::with_orthogonal_basis(
      ts.left->ambient_dim() * ts.right->ambient_dim(), std::move(basis), std::move(gens)));
  return ts;
}

LevelElement tensor_elements(const TensorSystem& ts, const LevelElement& p, const LevelElement& q) {
  LevelElement out = zero_element(ts.product, p.level * q.level);
  for (int a = 0; a < ts.left->dim(); ++a)
    for (int b = 0; b < ts.right->dim(); ++b)
      out.coeff[static_cast<size_t>(ts.index(a, b))] =
          kron(p.coeff[static_cast<size_t>(a)], q.coeff[static_cast<size_t>(b)]);
  return out;
}

LevelElement swap_factors(const TensorSystem& ts, const TensorSystem& st, const LevelElement& x) {
  LevelElement out = zero_element(st.product, x.level);
  for (int a = 0; a < ts.left->dim(); ++a)
    for (int b = 0; b < ts.right->dim(); ++b)
      out.coeff[static_cast<size_t>(st.index(b, a))] = x.coeff[static_cast<size_t>(ts.index(a, b))];
  return out;
}

}  // namespace opsys
