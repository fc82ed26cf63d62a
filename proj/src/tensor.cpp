#include "opsys/tensor.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <thread>

namespace opsys {

namespace {

/// real(<A, B>_F) = Re sum conj(A_ij) B_ij
double herm_inner(const Matrix& a, const Matrix& b) {
  return a.conjugate().cwiseProduct(b).sum().real();
}

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("OPSYS_THREADS")) {
    const int t = std::atoi(env);
    if (t > 0) return t;
  }
  return 1;
}

Matrix matrix_unit(int d, int i, int j) {
  Matrix e = Matrix::Zero(d, d);
  e(i, j) = 1;
  return e;
}

}  // namespace

// ---- min cone ---------------------------------------------------------------

bool min_member(const TensorSystem& ts, const LevelElement& x, double tol) {
  (void)ts;
  if (!x.hermitian(1e-8)) throw NonHermitianError("min_member: element is not hermitian");
  return min_eig(x.realize()) >= -tol;
}

StateSampleOutcome min_member_by_states(const TensorSystem& ts, const LevelElement& x,
                                        int samples, uint64_t seed, double tol) {
  StateSampleOutcome out;
  const int p = ts.left->ambient_dim();
  const int q = ts.right->ambient_dim();
  out.worst_eig = std::numeric_limits<double>::infinity();
  for (int s = 0; s < samples; ++s) {
    const int k = 1 + static_cast<int>(derive_seed(seed, 4 * s) % static_cast<uint64_t>(p));
    const int m = 1 + static_cast<int>(derive_seed(seed, 4 * s + 1) % static_cast<uint64_t>(q));
    SystemMap phi = random_ucp_to_matrices(ts.left, k, derive_seed(seed, 4 * s + 2));
    SystemMap psi = random_ucp_to_matrices(ts.right, m, derive_seed(seed, 4 * s + 3));
    Matrix y = Matrix::Zero(x.level * k * m, x.level * k * m);
    for (int a = 0; a < ts.left->dim(); ++a) {
      const Matrix pa = phi.codomain->realize(phi.action.col(a));
      for (int b = 0; b < ts.right->dim(); ++b) {
        const Matrix qb = psi.codomain->realize(psi.action.col(b));
        y += kron(x.coeff[static_cast<size_t>(ts.index(a, b))], kron(pa, qb));
      }
    }
    const double lmin = min_eig(hermitian_part(y));
    if (lmin < out.worst_eig) {
      out.worst_eig = lmin;
      if (lmin < -tol) {
        out.positive = false;
        out.witness_sample = s;
        out.witness_k = k;
        out.witness_m = m;
      }
    }
  }
  return out;
}

// ---- atoms --------------------------------------------------------------------

Matrix atom_realization(const TensorSystem& ts, const MaxAtom& a) {
  const int p = ts.left->ambient_dim();
  const int q = ts.right->ambient_dim();
  const int k = a.k(), l = a.l();
  Matrix pq = kron(a.p.realize(), a.q.realize());      // legs (k, p, l, q)
  Matrix c = permute_legs(pq, {k, p, l, q}, {0, 2, 1, 3});  // legs (k, l, p, q)
  Matrix lift = kron(a.alpha, Matrix::Identity(p * q, p * q));
  return lift * c * lift.adjoint();
}

Matrix decomposition_value(const TensorSystem& ts, const MaxDecomposition& d, int level) {
  const int dim = level * ts.product->ambient_dim();
  Matrix acc = Matrix::Zero(dim, dim);
  for (const auto& a : d.atoms) acc += atom_realization(ts, a);
  return acc;
}

double verify_decomposition(const TensorSystem& ts, const LevelElement& x,
                            const MaxDecomposition& d, bool* ok, double atom_tol) {
  bool good = true;
  for (const auto& a : d.atoms) {
    if (!cone_member(a.p, atom_tol) || !cone_member(a.q, atom_tol)) good = false;
    if (min_eig(hermitian_part(atom_realization(ts, a))) < -atom_tol) good = false;
  }
  const Matrix target =
      x.realize() + d.epsilon * Matrix::Identity(x.level * ts.product->ambient_dim(),
                                                 x.level * ts.product->ambient_dim());
  Matrix value = Matrix::Zero(target.rows(), target.cols());
  for (const auto& a : d.atoms) value += atom_realization(ts, a);
  const double residual = (target - value).norm();
  if (ok) *ok = good;
  return residual;
}

MaxDecomposition swap_decomposition(const MaxDecomposition& d) {
  MaxDecomposition out = d;
  for (auto& a : out.atoms) {
    std::swap(a.p, a.q);
    // reindex alpha columns: (u over k, v over l) -> (v, u)
    const int k = a.q.level, l = a.p.level;  // original k, l
    Matrix alpha(a.alpha.rows(), a.alpha.cols());
    for (int u = 0; u < k; ++u)
      for (int v = 0; v < l; ++v) alpha.col(v * k + u) = a.alpha.col(u * l + v);
    a.alpha = alpha;
  }
  std::swap(out.p_level_cap, out.q_level_cap);
  return out;
}

// ---- conditional-gradient certifier ---------------------------------------------

namespace {

struct AtomSearchResult {
  MaxAtom atom;
  double correlation = -std::numeric_limits<double>::infinity();
  Matrix realization;
};

// Quadratic form in alpha for fixed (P, Q): top eigenvector maximizes the
// correlation with the residual.
Matrix alpha_step_matrix(const Matrix& residual, const Matrix& c_pairs, int n, int kl, int pq) {
  Matrix h(n * kl, n * kl);
  for (int u2 = 0; u2 < n; ++u2)
    for (int v2 = 0; v2 < kl; ++v2)
      for (int u = 0; u < n; ++u)
        for (int v = 0; v < kl; ++v) {
          const auto rblock = residual.block(u2 * pq, u * pq, pq, pq);
          const auto cblock = c_pairs.block(v * pq, v2 * pq, pq, pq);
          h(u2 * kl + v2, u * kl + v) = rblock.cwiseProduct(cblock.transpose()).sum();
        }
  return h;
}

AtomSearchResult search_atom_once(const TensorSystem& ts, const Matrix& residual, int n, int kc,
                                  int lc, uint64_t rseed, int inner_iters) {
  const int p = ts.left->ambient_dim();
  const int q = ts.right->ambient_dim();
  const int pq = p * q;
  const int kl = kc * lc;
  const double tau_p = kc * p, tau_q = lc * q;

  LevelElement pe = random_positive(ts.left, kc, derive_seed(rseed, 1));
  LevelElement qe = random_positive(ts.right, lc, derive_seed(rseed, 2));
  auto normalize_trace = [](LevelElement& e, double tau) {
    const double tr = e.realize().trace().real();
    if (tr > 1e-12) e *= tau / tr;
  };
  normalize_trace(pe, tau_p);
  normalize_trace(qe, tau_q);

  Matrix alpha;
  AtomSearchResult best;
  for (int it = 0; it < inner_iters; ++it) {
    Matrix c_pairs = permute_legs(kron(pe.realize(), qe.realize()), {kc, p, lc, q}, {0, 2, 1, 3});
    Matrix h = alpha_step_matrix(residual, c_pairs, n, kl, pq);
    const auto eig = eig_herm(hermitian_part(h), 1e-6);
    const int top = static_cast<int>(eig.values.size()) - 1;
    if (eig.values(top) <= 1e-14) {
      pe = random_positive(ts.left, kc, derive_seed(rseed, 100 + 2 * it));
      qe = random_positive(ts.right, lc, derive_seed(rseed, 101 + 2 * it));
      normalize_trace(pe, tau_p);
      normalize_trace(qe, tau_q);
      continue;
    }
    const Vector va = eig.vectors.col(top);
    alpha = Matrix(n, kl);
    for (int u = 0; u < n; ++u)
      for (int v = 0; v < kl; ++v) alpha(u, v) = va(u * kl + v);

    // gradients for the cone steps
    Matrix lift = kron(alpha, Matrix::Identity(pq, pq));
    Matrix b = lift.adjoint() * residual * lift;                // legs ((kc,lc),(p,q))
    Matrix bp = permute_legs(b, {kc, lc, p, q}, {0, 2, 1, 3});  // legs (kc, p, lc, q)
    Matrix gp = partial_trace(
        bp * kron(Matrix::Identity(kc * p, kc * p), qe.realize()), {kc * p, lc * q}, {1});
    pe = cone_linear_max(ts.left, kc, gp, tau_p, &pe, 8);
    Matrix gq = partial_trace(
        bp * kron(pe.realize(), Matrix::Identity(lc * q, lc * q)), {kc * p, lc * q}, {0});
    qe = cone_linear_max(ts.right, lc, gq, tau_q, &qe, 8);

    MaxAtom cand{pe, qe, alpha};
    Matrix ar = atom_realization(ts, cand);
    const double an = ar.norm();
    if (an > 1e-14) {
      const double corr = herm_inner(residual, ar) / an;
      if (corr > best.correlation) {
        best.correlation = corr;
        best.atom = cand;
        best.realization = ar;
      }
    }
  }
  return best;
}

AtomSearchResult search_atom(const TensorSystem& ts, const Matrix& residual, int n, int kc,
                             int lc, uint64_t base_seed, int restarts, int inner_iters,
                             int threads) {
  std::vector<AtomSearchResult> results(static_cast<size_t>(restarts));
  auto run = [&](int r) {
    results[static_cast<size_t>(r)] =
        search_atom_once(ts, residual, n, kc, lc, base_seed + static_cast<uint64_t>(r),
                         inner_iters);
  };
  threads = std::min(threads, restarts);
  if (threads <= 1) {
    for (int r = 0; r < restarts; ++r) run(r);
  } else {
    std::vector<std::thread> pool;
    std::atomic<int> next{0};
    for (int t = 0; t < threads; ++t)
      pool.emplace_back([&] {
        for (;;) {
          const int r = next.fetch_add(1);
          if (r >= restarts) return;
          run(r);
        }
      });
    for (auto& th : pool) th.join();
  }
  // deterministic merge: best correlation, ties by restart index
  AtomSearchResult best = results[0];
  for (int r = 1; r < restarts; ++r)
    if (results[static_cast<size_t>(r)].correlation > best.correlation)
      best = results[static_cast<size_t>(r)];
  return best;
}

MaxAtom polish_atom(MaxAtom a) {
  a.p = cone_polish(a.p, 60);
  a.q = cone_polish(a.q, 60);
  auto lift = [](LevelElement& e) {
    const double lo = min_eig(e.realize());
    if (lo < 0) e.coeff[0] -= (lo - 1e-14) * Matrix::Identity(e.level, e.level);
  };
  lift(a.p);
  lift(a.q);
  return a;
}

MaxAtom unit_atom(const TensorSystem& ts, int n) {
  MaxAtom a;
  a.p = unit_element(ts.left, n);
  a.q = unit_element(ts.right, 1);
  a.alpha = Matrix::Identity(n, n);
  return a;
}

// Operator-Schmidt rank-one split of the target across level factorizations
// n = k * l. Emits an exact single atom when the target is an elementary
// tensor of cone elements.
std::vector<MaxAtom> product_probes(const TensorSystem& ts, const Matrix& target, int n) {
  std::vector<MaxAtom> probes;
  const int p = ts.left->ambient_dim();
  const int q = ts.right->ambient_dim();
  const double tn = target.norm();
  if (tn < 1e-14) return probes;
  for (int k = 1; k <= n; ++k) {
    if (n % k != 0) continue;
    const int l = n / k;
    Matrix g2 = permute_legs(target, {k, l, p, q}, {0, 2, 1, 3});  // legs (k,p,l,q)
    const int dkp = k * p, dlq = l * q;
    Matrix m(dkp * dkp, dlq * dlq);
    for (int r = 0; r < dkp; ++r)
      for (int r2 = 0; r2 < dkp; ++r2)
        for (int s = 0; s < dlq; ++s)
          for (int s2 = 0; s2 < dlq; ++s2)
            m(r * dkp + r2, s * dlq + s2) = g2(r * dlq + s, r2 * dlq + s2);
    Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    if (sv.size() == 0 || sv(0) < 1e-13) continue;
    if (sv.size() > 1 && sv(1) > 1e-10 * sv(0)) continue;

    Matrix a(dkp, dkp), b(dlq, dlq);
    for (int r = 0; r < dkp; ++r)
      for (int r2 = 0; r2 < dkp; ++r2) a(r, r2) = svd.matrixU()(r * dkp + r2, 0);
    for (int s = 0; s < dlq; ++s)
      for (int s2 = 0; s2 < dlq; ++s2) b(s, s2) = sv(0) * std::conj(svd.matrixV()(s * dlq + s2, 0));
    // fix the joint phase so both factors are hermitian, then sign
    const Complex tr2 = (a * a).trace();
    const double theta = std::arg(tr2) / 2.0;
    a *= std::exp(Complex(0, -theta));
    b *= std::exp(Complex(0, theta));
    a = hermitian_part(a);
    b = hermitian_part(b);
    if (a.trace().real() < 0) {
      a = -a;
      b = -b;
    }
    if ((g2 - kron(a, b)).norm() > 1e-9 * (1 + tn)) continue;
    if (min_eig(a) < -1e-10 * (1 + tn) || min_eig(b) < -1e-10 * (1 + tn)) continue;
    double res_a = 0.0, res_b = 0.0;
    LevelElement pe = element_from_realization(ts.left, k, a, &res_a);
    LevelElement qe = element_from_realization(ts.right, l, b, &res_b);
    if (res_a > 1e-9 * (1 + tn) || res_b > 1e-9 * (1 + tn)) continue;
    MaxAtom atom{cone_polish(pe, 20), cone_polish(qe, 20), Matrix::Identity(n, n)};
    probes.push_back(std::move(atom));
  }
  return probes;
}

}  // namespace

CertifyResult max_certify(const TensorSystem& ts, const LevelElement& x, double eps, long budget,
                          uint64_t seed, CertifyOptions opt) {
  if (!x.hermitian(1e-8)) throw NonHermitianError("max_certify: element is not hermitian");
  if (eps < 0) throw std::invalid_argument("max_certify: eps must be >= 0");
  const int n = x.level;
  const int p = ts.left->ambient_dim();
  const int q = ts.right->ambient_dim();
  const int pq = p * q;
  const int kc = opt.p_level_cap > 0 ? opt.p_level_cap : p;
  const int lc = opt.q_level_cap > 0 ? opt.q_level_cap : q;
  const int threads = resolve_threads(opt.threads);

  CertifyResult res;
  res.decomposition.epsilon = eps;
  res.decomposition.p_level_cap = kc;
  res.decomposition.q_level_cap = lc;
  res.decomposition.seed = seed;

  const Matrix xr = x.realize();
  const double xnorm = xr.norm();
  const Matrix target = xr + eps * Matrix::Identity(n * pq, n * pq);
  const double gate = 1e-6 * (1 + xnorm);
  const double floor_resid = 1e-9 * (1 + xnorm);

  // sound fast-fail: every atom sum is ambient PSD
  if (min_eig(hermitian_part(target)) < -0.5 * gate) {
    res.note = "target is not ambient-PSD; membership impossible";
    res.residual = target.norm();
    return res;
  }

  struct Entry {
    MaxAtom atom;
    Matrix real;
    double coeff = 0.0;
  };
  std::vector<Entry> dict;
  auto push_atom = [&](MaxAtom a) {
    a = polish_atom(std::move(a));
    Matrix r = atom_realization(ts, a);
    const double rn = r.norm();
    if (rn < 1e-13) return;
    a.alpha /= std::sqrt(rn);
    r /= rn;
    dict.push_back({std::move(a), std::move(r), 0.0});
  };

  push_atom(unit_atom(ts, n));
  for (auto& pr : product_probes(ts, target, n)) push_atom(std::move(pr));

  long used = 0;
  double residual_norm = target.norm();
  Matrix residual = target;
  double last_window_residual = residual_norm;
  int window = 0;

  for (int round = 0; round < opt.max_atoms; ++round) {
    // fully corrective: nonnegative least squares over the dictionary
    const int t = static_cast<int>(dict.size());
    RealMatrix gram(t, t);
    RealVector rhs(t);
    for (int i = 0; i < t; ++i) {
      rhs(i) = herm_inner(dict[static_cast<size_t>(i)].real, target);
      for (int j = i; j < t; ++j) {
        gram(i, j) = herm_inner(dict[static_cast<size_t>(i)].real, dict[static_cast<size_t>(j)].real);
        gram(j, i) = gram(i, j);
      }
    }
    RealVector c = nnls_gram(gram, rhs);
    residual = target;
    for (int i = 0; i < t; ++i) {
      dict[static_cast<size_t>(i)].coeff = c(i);
      if (c(i) != 0.0) residual -= c(i) * dict[static_cast<size_t>(i)].real;
    }
    residual_norm = residual.norm();
    if (residual_norm <= floor_resid) break;

    // prune inactive atoms (keep the dictionary near the active set)
    if (dict.size() > 8) {
      std::vector<Entry> kept;
      for (auto& e : dict)
        if (e.coeff > 1e-14) kept.push_back(std::move(e));
      if (!kept.empty()) dict = std::move(kept);
    }

    // stall / budget control
    if (++window >= 15) {
      if (residual_norm > (1.0 - 1e-3) * last_window_residual && residual_norm > gate) {
        res.note = "stalled: no further correlation gain";
        break;
      }
      last_window_residual = residual_norm;
      window = 0;
    }
    const long atom_cost = static_cast<long>(opt.restarts) * opt.inner_iters;
    if (used + atom_cost > budget) {
      res.note = "budget exhausted";
      break;
    }
    used += atom_cost;

    AtomSearchResult found = search_atom(ts, residual, n, kc, lc,
                                         derive_seed(seed, static_cast<uint64_t>(round)),
                                         opt.restarts, opt.inner_iters, threads);
    if (!(found.correlation > 1e-12 * residual_norm)) {
      res.note = "no positively correlated atom found";
      break;
    }
    push_atom(found.atom);
  }

  res.iterations_used = used;
  res.residual = residual_norm;
  res.success = residual_norm <= gate;

  MaxDecomposition& d = res.decomposition;
  for (auto& e : dict) {
    if (e.coeff <= 1e-14) continue;
    MaxAtom a = e.atom;
    a.alpha *= std::sqrt(e.coeff);
    d.atoms.push_back(std::move(a));
  }
  d.residual = (target - decomposition_value(ts, d, n)).norm();
  return res;
}

MaxDecomposition matrix_factor_decompose(const TensorSystem& ts, const LevelElement& x,
                                         double tol) {
  if (!ts.left->is_full())
    throw std::invalid_argument("matrix_factor_decompose: left factor must be a full matrix algebra");
  if (!x.hermitian(1e-8))
    throw NonHermitianError("matrix_factor_decompose: element is not hermitian");
  const Matrix xr = x.realize();
  if (min_eig(xr) < -1e-9)
    throw NotPositiveError("matrix_factor_decompose: element is not in the minimal cone");
  const int n = ts.left->ambient_dim();
  const int k = x.level;

  // P = [E_ij] in M_n(M_n)^+
  Matrix pr = Matrix::Zero(n * n, n * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) pr += kron(matrix_unit(n, i, j), matrix_unit(n, i, j));
  double pres = 0.0;
  LevelElement pe = element_from_realization(ts.left, n, pr, &pres);

  // Q = X reread at level k*n over the right factor
  double qres = 0.0;
  LevelElement qe = element_from_realization(ts.right, k * n, xr, &qres);
  if (pres > 1e-10 || qres > 1e-8)
    throw NotPositiveError("matrix_factor_decompose: reinterpretation left the span");

  // alpha[(i),(a,j,b)] = delta_ab delta_ij
  Matrix alpha = Matrix::Zero(k, n * k * n);
  for (int i = 0; i < k; ++i)
    for (int a = 0; a < n; ++a) alpha(i, a * (k * n) + i * n + a) = 1;

  MaxDecomposition d;
  d.epsilon = 0.0;
  d.p_level_cap = n;
  d.q_level_cap = k * n;
  d.atoms.push_back({std::move(pe), std::move(qe), std::move(alpha)});
  d.residual = (xr - decomposition_value(ts, d, k)).norm();
  if (d.residual > tol)
    throw NotPositiveError("matrix_factor_decompose: reconstruction check failed");
  return d;
}

// ---- refutation -----------------------------------------------------------------

Matrix functional_apply(const TensorSystem& ts, const RealVector& f, const LevelElement& x) {
  Matrix out = Matrix::Zero(x.level, x.level);
  for (int a = 0; a < ts.left->dim(); ++a)
    for (int b = 0; b < ts.right->dim(); ++b)
      out += f(ts.index(a, b)) * x.coeff[static_cast<size_t>(ts.index(a, b))];
  return out;
}

Matrix functional_pairing(const TensorSystem& ts, const RealVector& f, const LevelElement& p,
                          const LevelElement& q) {
  Matrix out = Matrix::Zero(p.level * q.level, p.level * q.level);
  for (int a = 0; a < ts.left->dim(); ++a)
    for (int b = 0; b < ts.right->dim(); ++b)
      out += f(ts.index(a, b)) *
             kron(p.coeff[static_cast<size_t>(a)], q.coeff[static_cast<size_t>(b)]);
  return out;
}

namespace {

struct ConstraintPair {
  LevelElement p, q;
  RealMatrix basis;  // (kl)^2 x D, column (a,b) = hvec(K^P_a (x) K^Q_b)
};

ConstraintPair make_constraint(const TensorSystem& ts, LevelElement p, LevelElement q) {
  ConstraintPair c{std::move(p), std::move(q), {}};
  const int kl = c.p.level * c.q.level;
  const int d = ts.product->dim();
  c.basis.resize(hvec_dim(kl), d);
  for (int a = 0; a < ts.left->dim(); ++a)
    for (int b = 0; b < ts.right->dim(); ++b) {
      Matrix w = kron(hermitian_part(c.p.coeff[static_cast<size_t>(a)]),
                      hermitian_part(c.q.coeff[static_cast<size_t>(b)]));
      c.basis.col(ts.index(a, b)) = hvec(w);
    }
  return c;
}

std::vector<ConstraintPair> sample_mesh(const TensorSystem& ts,
                                        const std::vector<std::pair<int, int>>& levels,
                                        int mesh_size, uint64_t seed) {
  std::vector<ConstraintPair> mesh;
  for (size_t li = 0; li < levels.size(); ++li) {
    const int k = levels[li].first;
    const int l = levels[li].second;
    mesh.push_back(make_constraint(ts, unit_element(ts.left, k), unit_element(ts.right, l)));
    if (ts.left->is_full()) {
      const int pdim = ts.left->ambient_dim();
      if (k == pdim) {
        Matrix pr = Matrix::Zero(pdim * pdim, pdim * pdim);
        for (int i = 0; i < pdim; ++i)
          for (int j = 0; j < pdim; ++j) pr += kron(matrix_unit(pdim, i, j), matrix_unit(pdim, i, j));
        mesh.push_back(make_constraint(ts, element_from_realization(ts.left, pdim, pr),
                                       unit_element(ts.right, l)));
      }
    }
    for (int s = 0; s < mesh_size; ++s) {
      const uint64_t ps = derive_seed(seed, 1000 * li + 2 * s);
      const uint64_t qs = derive_seed(seed, 1000 * li + 2 * s + 1);
      LevelElement pe = (s % 4 == 3) ? random_positive(ts.left, k, ps)
                                     : random_boundary_positive(ts.left, k, ps);
      LevelElement qe = (s % 4 == 3) ? random_positive(ts.right, l, qs)
                                     : random_boundary_positive(ts.right, l, qs);
      mesh.push_back(make_constraint(ts, cone_polish(pe, 12), cone_polish(qe, 12)));
    }
  }
  return mesh;
}

struct FunctionalSolve {
  RealVector f;
  double violation = std::numeric_limits<double>::infinity();
  long iterations = 0;
};

// Projected subgradient on the sampled joint-positivity violation with the
// normalization F(unit) = 1 and, when margin_target < 0, the separation
// constraint <margin_vec, F> <= margin_target.
FunctionalSolve solve_functional(const TensorSystem& ts, const std::vector<ConstraintPair>& mesh,
                                 const RealVector& margin_vec, double margin_target,
                                 const RealVector* warm, int iters) {
  const int d = ts.product->dim();
  FunctionalSolve out;
  RealVector f = warm ? *warm : RealVector::Zero(d);
  if (!warm) f(0) = 1.0;

  RealVector mdir = margin_vec;
  if (mdir.size() == d) mdir(0) = 0.0;  // keep F(unit) fixed while projecting
  const double mnorm2 = mdir.size() == d ? mdir.squaredNorm() : 0.0;

  auto project_affine = [&](RealVector& g) {
    g(0) = 1.0;
    if (margin_target < 0 && mnorm2 > 1e-14) {
      const double v = margin_vec.dot(g);
      if (v > margin_target) g -= ((v - margin_target) / mnorm2) * mdir;
    }
  };
  project_affine(f);

  double step = 1.0;
  {
    double l_est = 0.0;
    for (const auto& c : mesh) l_est += c.basis.squaredNorm();
    step = 1.0 / (1.0 + l_est);
  }

  double last = std::numeric_limits<double>::infinity();
  for (int it = 0; it < iters; ++it) {
    RealVector grad = RealVector::Zero(d);
    double viol2 = 0.0;
    for (const auto& c : mesh) {
      const int kl = c.p.level * c.q.level;
      RealVector y = c.basis * f;
      Matrix ym = unhvec(y.data(), kl);
      Eigen::SelfAdjointEigenSolver<Matrix> es(ym);
      RealVector neg = es.eigenvalues().cwiseMin(0.0);
      if (neg(0) >= 0.0) continue;
      Matrix nm = es.eigenvectors() * neg.asDiagonal() * es.eigenvectors().adjoint();
      viol2 += nm.squaredNorm();
      grad += c.basis.transpose() * hvec(nm);
    }
    out.iterations = it + 1;
    if (viol2 <= 1e-22) {
      out.violation = std::sqrt(viol2);
      break;
    }
    if (viol2 > last && step > 1e-12) step *= 0.7;
    last = viol2;
    f -= step * grad;
    project_affine(f);
    out.violation = std::sqrt(viol2);
  }
  out.f = f;
  return out;
}

bool exact_dual_check(const TensorSystem& ts, const RealVector& f, bool* applicable) {
  *applicable = false;
  const bool left_full = ts.left->is_full();
  const bool right_full = ts.right->is_full();
  if (!left_full && !right_full) return true;
  *applicable = true;
  const int pdim = left_full ? ts.left->ambient_dim() : ts.right->ambient_dim();
  SystemPtr fac_full = left_full ? ts.left : ts.right;
  SystemPtr fac_other = left_full ? ts.right : ts.left;

  std::vector<Matrix> images;
  for (int b = 0; b < fac_other->dim(); ++b) {
    Matrix m = Matrix::Zero(pdim, pdim);
    for (int i = 0; i < pdim; ++i)
      for (int j = 0; j < pdim; ++j) {
        Vector cu = fac_full->coefficients(matrix_unit(pdim, i, j));
        Complex val(0, 0);
        for (int a = 0; a < fac_full->dim(); ++a)
          val += cu(a) * (left_full ? f(ts.index(a, b)) : f(ts.index(b, a)));
        m += val * matrix_unit(pdim, i, j);
      }
    images.push_back(hermitian_part(m));
  }
  SystemMap phi_f = map_from_basis_images(fac_other, full_matrix_system(pdim), images);
  return is_cp_subsystem(phi_f).certified();
}

std::vector<double> worst_pairing_eigs(const TensorSystem& ts, const RealVector& f,
                                       const std::vector<std::pair<int, int>>& levels,
                                       int mesh_size, uint64_t seed) {
  std::vector<double> eigs;
  auto mesh = sample_mesh(ts, levels, mesh_size, seed);
  size_t idx = 0;
  for (size_t li = 0; li < levels.size(); ++li) {
    double worst = std::numeric_limits<double>::infinity();
    while (idx < mesh.size()) {
      const auto& c = mesh[idx];
      if (c.p.level != levels[li].first || c.q.level != levels[li].second) break;
      worst = std::min(worst, min_eig(hermitian_part(functional_pairing(ts, f, c.p, c.q))));
      ++idx;
    }
    eigs.push_back(worst);
  }
  return eigs;
}

}  // namespace

RefuteResult max_refute(const TensorSystem& ts, const LevelElement& x,
                        const std::vector<std::pair<int, int>>& levels, int mesh_size,
                        uint64_t seed, double margin_scale) {
  if (!x.hermitian(1e-8)) throw NonHermitianError("max_refute: element is not hermitian");
  RefuteResult out;
  const double xnorm = x.realize().norm();
  const double margin_req = margin_scale * std::max(xnorm, 1e-12);

  // margin functional: w* [F(x_ij)] w as a linear form in F
  Vector w = Vector::Ones(x.level);
  if (x.level > 1) w /= std::sqrt(static_cast<double>(x.level));

  auto margin_vector = [&](const Vector& wv) {
    RealVector m(ts.product->dim());
    for (int a = 0; a < ts.left->dim(); ++a)
      for (int b = 0; b < ts.right->dim(); ++b) {
        const int i = ts.index(a, b);
        m(i) = (wv.adjoint() * x.coeff[static_cast<size_t>(i)] * wv).value().real();
      }
    return m;
  };

  auto mesh = sample_mesh(ts, levels, mesh_size, derive_seed(seed, 7));
  RealVector warm;
  for (int attempt = 0; attempt < 3; ++attempt) {
    const double delta = margin_req * (attempt == 0 ? 4.0 : (attempt == 1 ? 2.0 : 1.0));
    RealVector mv = margin_vector(w);
    FunctionalSolve fs = solve_functional(ts, mesh, mv, -delta, warm.size() ? &warm : nullptr, 4000);
    out.iterations += fs.iterations;
    warm = fs.f;
    if (fs.violation > 1e-9) continue;

    // margin must hold for the matrix form, not just the w-slice
    const double margin = min_eig(hermitian_part(functional_apply(ts, fs.f, x)));
    if (margin > -margin_req) {
      if (x.level > 1) {
        const auto eig = eig_herm(hermitian_part(functional_apply(ts, fs.f, x)), 1e-6);
        w = eig.vectors.col(0);
      }
      continue;
    }

    bool applicable = false;
    if (!exact_dual_check(ts, fs.f, &applicable)) continue;

    RefutationEvidence ev;
    ev.functional = fs.f;
    ev.checked_levels = levels;
    ev.margin = margin;
    ev.mesh_size = mesh_size;
    ev.seed = seed;
    ev.exact_dual_side = applicable;
    ev.level_min_eigs = worst_pairing_eigs(ts, fs.f, levels, mesh_size, derive_seed(seed, 7));
    if (!verify_refutation(ts, x, ev, 10, derive_seed(seed, 0xFE5), 1e-8, margin_scale)) {
      // grow the mesh with fresh samples and retry
      auto extra = sample_mesh(ts, levels, mesh_size, derive_seed(seed, 7000 + attempt));
      for (auto& c : extra) mesh.push_back(std::move(c));
      continue;
    }
    out.found = true;
    out.evidence = std::move(ev);
    return out;
  }
  return out;
}

bool verify_refutation(const TensorSystem& ts, const LevelElement& x,
                       const RefutationEvidence& ev, int mesh_scale, uint64_t seed,
                       double psd_tol, double margin_scale) {
  const double xnorm = x.realize().norm();
  const double margin_req = margin_scale * std::max(xnorm, 1e-12);
  if (std::abs(ev.functional(0) - 1.0) > 1e-9) return false;
  if (min_eig(hermitian_part(functional_apply(ts, ev.functional, x))) > -margin_req) return false;
  auto mesh = sample_mesh(ts, ev.checked_levels, ev.mesh_size * mesh_scale, seed);
  for (const auto& c : mesh) {
    const Matrix pairing = hermitian_part(functional_pairing(ts, ev.functional, c.p, c.q));
    if (min_eig(pairing) < -psd_tol * std::max(1.0, pairing.norm())) return false;
  }
  bool applicable = false;
  if (!exact_dual_check(ts, ev.functional, &applicable)) return false;
  return true;
}

// ---- witness search and nuclearity reports ----------------------------------------

WitnessSearchResult find_nonnuclearity_witness(const TensorSystem& ts,
                                               const std::vector<std::pair<int, int>>& levels,
                                               int mesh_size, int rounds, long certify_budget,
                                               uint64_t seed) {
  WitnessSearchResult out;
  const int pq = ts.product->ambient_dim();

  // candidate starts: the partial maximally entangled pattern, then random
  // boundary elements of the min cone
  std::vector<LevelElement> starts;
  {
    Matrix x0 = Matrix::Zero(pq, pq);
    bool ok = ts.left->ambient_dim() == ts.right->ambient_dim();
    if (ok) {
      for (int a = 0; a < ts.left->dim(); ++a) {
        const Matrix ba = ts.left->basis(a) / std::sqrt(ts.left->basis_norm2(a));
        const Matrix bc = ba.conjugate();
        if (ts.right->span_residual(bc) > 1e-9) {
          ok = false;
          break;
        }
        x0 += kron(ba, bc);
      }
    }
    if (ok) {
      const double lo = min_eig(x0);
      x0 -= (lo)*Matrix::Identity(pq, pq);
      double res = 0.0;
      LevelElement e = element_from_realization(ts.product, 1, x0, &res);
      if (res <= 1e-9) starts.push_back(std::move(e));
    }
  }
  starts.push_back(random_boundary_positive(ts.product, 1, derive_seed(seed, 11)));
  starts.push_back(random_boundary_positive(ts.product, 1, derive_seed(seed, 12)));

  for (size_t cand = 0; cand < starts.size(); ++cand) {
    LevelElement x = starts[cand];
    auto mesh = sample_mesh(ts, levels, mesh_size, derive_seed(seed, 100 + cand));
    RealVector warm;
    for (int round = 0; round < rounds; ++round) {
      ++out.rounds_used;
      const double xnorm = x.realize().norm();
      if (xnorm < 1e-10) break;
      RealVector mv(ts.product->dim());
      for (int i = 0; i < ts.product->dim(); ++i)
        mv(i) = x.coeff[static_cast<size_t>(i)](0, 0).real();
      const double margin_req = 1e-3 * xnorm;

      FunctionalSolve fs = solve_functional(ts, mesh, mv, -2.0 * margin_req,
                                            warm.size() ? &warm : nullptr, 4000);
      warm = fs.f;
      const double fx = functional_apply(ts, fs.f, x)(0, 0).real();

      if (fs.violation <= 1e-9 && fx <= -margin_req) {
        // candidate separation: confirm through the public pipeline
        RefuteResult rr = max_refute(ts, x, levels, mesh_size, derive_seed(seed, 500 + cand));
        if (rr.found) {
          CertifyResult cr = max_certify(ts, x, 1e-3 * xnorm, certify_budget,
                                         derive_seed(seed, 600 + cand));
          if (!cr.success) {
            out.found = true;
            out.x = x;
            out.evidence = rr.evidence;
            out.certify_attempt = cr;
            return out;
          }
          // certification succeeded: its atoms are true constraints
          for (const auto& a : cr.decomposition.atoms)
            mesh.push_back(make_constraint(ts, a.p, a.q));
        }
      }

      // element descent: most negative min-cone direction for the current F
      Matrix dft = Matrix::Zero(pq, pq);
      for (int a = 0; a < ts.left->dim(); ++a)
        for (int b = 0; b < ts.right->dim(); ++b)
          dft += fs.f(ts.index(a, b)) * kron(ts.left->basis(a), ts.right->basis(b)) /
                 (ts.left->basis_norm2(a) * ts.right->basis_norm2(b));
      x = cone_linear_max(ts.product, 1, -dft, static_cast<double>(pq), &x, 12);
      const double tr = x.realize().trace().real();
      if (tr > 1e-10) x *= static_cast<double>(pq) / tr;
    }
  }
  return out;
}

NuclearityReport nuclearity_report(SystemPtr s, const std::vector<SystemPtr>& partners, int n_max,
                                   long budget, uint64_t seed, NuclearityOptions opt) {
  NuclearityReport report;
  bool any_evidence = false, any_inconclusive = false;

  for (size_t pi = 0; pi < partners.size(); ++pi) {
    PartnerReport pr;
    pr.partner = partners[pi];
    TensorSystem ts = make_tensor_system(s, partners[pi]);
    pr.exact_route = s->dim() == 1 || partners[pi]->dim() == 1 || s->is_full() ||
                     partners[pi]->is_full();

    bool all_certified = true;
    for (int n = 1; n <= n_max; ++n) {
      for (int i = 0; i < opt.samples_per_level; ++i) {
        LevelElement x =
            random_positive(ts.product, n, derive_seed(seed, 10000 * pi + 100 * n + i));
        const double eps = 1e-3 * std::max(x.realize().norm(), 1e-12);
        CertifyResult cr = max_certify(ts, x, eps, budget, derive_seed(seed, 777 + i), opt.certify);
        pr.outcomes.push_back({n, eps, cr.success, cr.residual});
        if (!cr.success) {
          all_certified = false;
          RefuteResult rr = max_refute(ts, x, opt.refute_levels, opt.mesh_size,
                                       derive_seed(seed, 888 + i));
          if (rr.found) {
            WitnessSearchResult w;
            w.found = true;
            w.x = x;
            w.evidence = rr.evidence;
            w.certify_attempt = cr;
            pr.witness = std::move(w);
            pr.verdict = NuclearityVerdict::EvidenceAgainst;
          }
        }
      }
    }

    if (pr.verdict != NuclearityVerdict::EvidenceAgainst) {
      if (all_certified) {
        bool seek = !pr.exact_route && opt.seesaw_rounds > 0;
        if (seek) {
          WitnessSearchResult w = find_nonnuclearity_witness(
              ts, opt.refute_levels, opt.mesh_size, opt.seesaw_rounds, budget,
              derive_seed(seed, 31337 + pi));
          if (w.found) {
            pr.witness = std::move(w);
            pr.verdict = NuclearityVerdict::EvidenceAgainst;
          } else {
            pr.verdict = NuclearityVerdict::ConsistentWithNuclear;
            pr.note = "all certifications succeeded; witness seesaw found nothing at budget";
          }
        } else {
          pr.verdict = NuclearityVerdict::ConsistentWithNuclear;
          if (pr.exact_route) pr.note = "a factor is full or one-dimensional: max = min exactly";
        }
      } else {
        pr.verdict = NuclearityVerdict::Inconclusive;
        pr.note = "certification failures without verified refutation evidence";
      }
    }

    any_evidence |= pr.verdict == NuclearityVerdict::EvidenceAgainst;
    any_inconclusive |= pr.verdict == NuclearityVerdict::Inconclusive;
    report.partners.push_back(std::move(pr));
  }

  report.aggregate = any_evidence ? NuclearityVerdict::EvidenceAgainst
                     : any_inconclusive ? NuclearityVerdict::Inconclusive
                                        : NuclearityVerdict::ConsistentWithNuclear;
  return report;
}

}  // namespace opsys
