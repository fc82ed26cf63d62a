#include "opsys/dense.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <cmath>
#include <numeric>

namespace opsys {

EigResult eig_herm(const Matrix& a, double herm_tol) {
  if (a.rows() != a.cols()) throw DimensionMismatchError("eig_herm: matrix not square");
  const double res = herm_residual(a);
  if (res > herm_tol)
    throw NonHermitianError("eig_herm: symmetry residual " + std::to_string(res));
  Eigen::SelfAdjointEigenSolver<Matrix> es(hermitian_part(a));
  if (es.info() != Eigen::Success) throw std::runtime_error("eig_herm: solver failed");
  return {es.eigenvalues(), es.eigenvectors()};
}

double min_eig(const Matrix& a, double herm_tol) {
  return eig_herm(a, herm_tol).values(0);
}

double max_eig(const Matrix& a, double herm_tol) {
  const auto e = eig_herm(a, herm_tol);
  return e.values(e.values.size() - 1);
}

Matrix project_psd(const Matrix& a, double herm_tol) {
  const auto e = eig_herm(a, herm_tol);
  RealVector clipped = e.values.cwiseMax(0.0);
  return e.vectors * clipped.asDiagonal() * e.vectors.adjoint();
}

double op_norm(const Matrix& a) {
  if (a.rows() == 0 || a.cols() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(a);
  return svd.singularValues()(0);
}

Matrix identity(int d) { return Matrix::Identity(d, d); }

namespace {

int total_dim(const std::vector<int>& dims) {
  int n = 1;
  for (int d : dims) n *= d;
  return n;
}

void unflatten(int flat, const std::vector<int>& dims, std::vector<int>& idx) {
  for (int j = static_cast<int>(dims.size()) - 1; j >= 0; --j) {
    idx[j] = flat % dims[j];
    flat /= dims[j];
  }
}

int flatten(const std::vector<int>& idx, const std::vector<int>& dims) {
  int flat = 0;
  for (size_t j = 0; j < dims.size(); ++j) flat = flat * dims[j] + idx[j];
  return flat;
}

}  // namespace

Matrix permute_legs(const Matrix& m, const std::vector<int>& dims, const std::vector<int>& perm) {
  const int n = total_dim(dims);
  if (m.rows() != n || m.cols() != n)
    throw DimensionMismatchError("permute_legs: dims do not match matrix size");
  std::vector<int> new_dims(dims.size());
  for (size_t j = 0; j < perm.size(); ++j) new_dims[j] = dims[perm[j]];
  // row_map[old_flat] = new_flat
  std::vector<int> row_map(n);
  std::vector<int> idx(dims.size()), pidx(dims.size());
  for (int f = 0; f < n; ++f) {
    unflatten(f, dims, idx);
    for (size_t j = 0; j < perm.size(); ++j) pidx[j] = idx[perm[j]];
    row_map[f] = flatten(pidx, new_dims);
  }
  Matrix out(n, n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) out(row_map[r], row_map[c]) = m(r, c);
  return out;
}

Matrix partial_trace(const Matrix& m, const std::vector<int>& dims, const std::vector<int>& traced) {
  const int n = total_dim(dims);
  if (m.rows() != n || m.cols() != n)
    throw DimensionMismatchError("partial_trace: dims do not match matrix size");
  std::vector<bool> is_traced(dims.size(), false);
  for (int t : traced) is_traced[t] = true;
  std::vector<int> kept_dims, traced_dims;
  for (size_t j = 0; j < dims.size(); ++j)
    (is_traced[j] ? traced_dims : kept_dims).push_back(dims[j]);
  const int nk = total_dim(kept_dims);
  const int nt = total_dim(traced_dims);
  Matrix out = Matrix::Zero(nk, nk);

  std::vector<int> idx(dims.size());
  auto compose = [&](const std::vector<int>& kept, const std::vector<int>& tr) {
    size_t ki = 0, ti = 0;
    for (size_t j = 0; j < dims.size(); ++j) idx[j] = is_traced[j] ? tr[ti++] : kept[ki++];
    return flatten(idx, dims);
  };

  std::vector<int> kr(kept_dims.size()), kc(kept_dims.size()), tt(traced_dims.size());
  for (int r = 0; r < nk; ++r) {
    unflatten(r, kept_dims, kr);
    for (int c = 0; c < nk; ++c) {
      unflatten(c, kept_dims, kc);
      Complex acc(0, 0);
      for (int t = 0; t < nt; ++t) {
        unflatten(t, traced_dims, tt);
        acc += m(compose(kr, tt), compose(kc, tt));
      }
      out(r, c) = acc;
    }
  }
  return out;
}

uint64_t derive_seed(uint64_t seed, uint64_t salt) {
  // splitmix64 over the combined word
  uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double Rng::uniform() {
  return (gen_() >> 11) * 0x1.0p-53;
}

double Rng::gaussian() {
  double u1 = uniform(), u2 = uniform();
  if (u1 < 1e-300) u1 = 1e-300;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

Complex Rng::cgaussian() {
  const double re = gaussian();
  const double im = gaussian();
  return Complex(re, im) / std::sqrt(2.0);
}

Matrix Rng::gaussian_matrix(int rows, int cols) {
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = cgaussian();
  return m;
}

Matrix Rng::gaussian_herm(int n) {
  Matrix m(n, n);
  for (int i = 0; i < n; ++i) {
    m(i, i) = Complex(gaussian(), 0);
    for (int j = i + 1; j < n; ++j) {
      const Complex z = cgaussian();
      m(i, j) = z;
      m(j, i) = std::conj(z);
    }
  }
  return m;
}

int Rng::uniform_int(int lo, int hi) {
  return lo + static_cast<int>(gen_() % static_cast<uint64_t>(hi - lo + 1));
}

int hvec_dim(int d) { return d * d; }

void hvec_into(const Matrix& a, double* out) {
  const int d = static_cast<int>(a.rows());
  int idx = 0;
  for (int i = 0; i < d; ++i) out[idx++] = a(i, i).real();
  const double s = std::sqrt(2.0);
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j) {
      out[idx++] = s * a(i, j).real();
      out[idx++] = s * a(i, j).imag();
    }
}

RealVector hvec(const Matrix& a) {
  RealVector v(hvec_dim(static_cast<int>(a.rows())));
  hvec_into(a, v.data());
  return v;
}

RealVector nnls_gram(const RealMatrix& gram, const RealVector& b, int max_iter) {
  const int n = static_cast<int>(b.size());
  if (max_iter <= 0) max_iter = 6 * n + 60;
  RealVector c = RealVector::Zero(n);
  std::vector<bool> active(n, false);  // passive set = active[i] true
  const double scale = 1.0 + (n ? b.cwiseAbs().maxCoeff() : 0.0);

  for (int outer = 0; outer < max_iter; ++outer) {
    RealVector w = b - gram * c;
    int best = -1;
    double best_w = 1e-12 * scale;
    for (int i = 0; i < n; ++i)
      if (!active[i] && w(i) > best_w) {
        best_w = w(i);
        best = i;
      }
    if (best < 0) break;
    active[static_cast<size_t>(best)] = true;

    for (int inner = 0; inner < max_iter; ++inner) {
      std::vector<int> idx;
      for (int i = 0; i < n; ++i)
        if (active[static_cast<size_t>(i)]) idx.push_back(i);
      RealMatrix gp(idx.size(), idx.size());
      RealVector bp(idx.size());
      for (size_t r = 0; r < idx.size(); ++r) {
        bp(static_cast<Eigen::Index>(r)) = b(idx[r]);
        for (size_t s = 0; s < idx.size(); ++s)
          gp(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(s)) = gram(idx[r], idx[s]);
      }
      gp.diagonal().array() += 1e-12 * scale;
      RealVector z = gp.ldlt().solve(bp);

      bool all_pos = true;
      for (Eigen::Index r = 0; r < z.size(); ++r)
        if (z(r) <= 0) all_pos = false;
      if (all_pos) {
        c.setZero();
        for (size_t r = 0; r < idx.size(); ++r) c(idx[r]) = z(static_cast<Eigen::Index>(r));
        break;
      }
      double theta = 1.0;
      for (size_t r = 0; r < idx.size(); ++r) {
        const double zi = z(static_cast<Eigen::Index>(r));
        const double ci = c(idx[r]);
        if (zi <= 0 && ci - zi > 1e-300) theta = std::min(theta, ci / (ci - zi));
      }
      for (size_t r = 0; r < idx.size(); ++r) {
        const double zi = z(static_cast<Eigen::Index>(r));
        c(idx[r]) += theta * (zi - c(idx[r]));
        if (c(idx[r]) <= 1e-13 * scale) {
          c(idx[r]) = 0;
          active[static_cast<size_t>(idx[r])] = false;
        }
      }
    }
  }
  return c;
}

Matrix unhvec(const double* in, int d) {
  Matrix a(d, d);
  int idx = 0;
  for (int i = 0; i < d; ++i) a(i, i) = Complex(in[idx++], 0);
  const double s = 1.0 / std::sqrt(2.0);
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j) {
      const double re = in[idx++] * s;
      const double im = in[idx++] * s;
      a(i, j) = Complex(re, im);
      a(j, i) = Complex(re, -im);
    }
  return a;
}

}  // namespace opsys
