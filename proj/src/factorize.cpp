#include "opsys/factorize.hpp"

#include <cmath>

namespace opsys {

namespace {

double herm_inner(const Matrix& a, const Matrix& b) {
  return a.conjugate().cwiseProduct(b).sum().real();
}

Matrix matrix_unit(int d, int i, int j) {
  Matrix e = Matrix::Zero(d, d);
  e(i, j) = 1;
  return e;
}

}  // namespace

DualTensorElement inclusion_as_tensor_element(SystemPtr e, SystemPtr s) {
  DualTensorElement el;
  el.w.resize(e->dim(), s->dim());
  for (int a = 0; a < e->dim(); ++a) {
    double res = 0.0;
    if (!s->contains(e->basis(a), 1e-8, &res))
      throw DimensionMismatchError("inclusion_as_tensor_element: E is not a subsystem of S");
    el.w.row(a) = s->coefficients(e->basis(a)).transpose();
  }
  el.e = std::move(e);
  el.s = std::move(s);
  return el;
}

Complex pair_with(const DualTensorElement& el, const Matrix& x, const Matrix& state_density) {
  const Vector cx = el.e->coefficients(x);
  Complex acc(0, 0);
  for (int a = 0; a < el.e->dim(); ++a) {
    const Matrix img = el.s->realize(el.w.row(a).transpose());
    acc += cx(a) * (state_density.adjoint() * img).trace();
  }
  return acc;
}

double omega1(const SystemPtr& e, const Matrix& x) {
  return (x.trace() / static_cast<double>(e->ambient_dim())).real();
}

Matrix map_atom_value(const MapAtom& a, const SystemPtr& codomain, const Matrix& x) {
  const int qt = codomain->ambient_dim();
  const Matrix fx = a.f.apply(x);
  const Matrix lift = kron(a.alpha, Matrix::Identity(qt, qt));
  return lift * kron(fx, a.q.realize()) * lift.adjoint();
}

namespace {

struct MapTarget {
  SystemPtr e;
  SystemPtr codomain;            // T
  std::vector<Matrix> values;    // target on the E basis, realized in the ambient of T
  std::vector<Matrix> e_basis;   // basis matrices of E
};

double target_norm(const std::vector<Matrix>& vals) {
  double acc = 0;
  for (const auto& v : vals) acc += v.squaredNorm();
  return std::sqrt(acc);
}

struct MapAtomSearch {
  MapAtom atom;
  std::vector<Matrix> values;
  double correlation = -std::numeric_limits<double>::infinity();
};

std::vector<Matrix> atom_values(const MapAtom& a, const MapTarget& t) {
  std::vector<Matrix> vals;
  vals.reserve(t.e_basis.size());
  for (const auto& x : t.e_basis) vals.push_back(map_atom_value(a, t.codomain, x));
  return vals;
}

MapAtomSearch search_map_atom_once(const MapTarget& t, const std::vector<Matrix>& residual,
                                   int r, int m, uint64_t rseed, int inner_iters) {
  const int pe = t.e->ambient_dim();
  const int qt = t.codomain->ambient_dim();
  const double tau_c = pe * r;
  const double tau_q = m * qt;

  Rng rng(rseed);
  // Choi lift of the f side; start from a random pure lift
  Matrix v0 = rng.gaussian_matrix(pe * r, 1);
  Matrix choi = tau_c * (v0 * v0.adjoint()) / std::max(v0.squaredNorm(), 1e-12);
  LevelElement qe = random_positive(t.codomain, m, derive_seed(rseed, 5));
  {
    const double tr = qe.realize().trace().real();
    if (tr > 1e-12) qe *= tau_q / tr;
  }

  Matrix alpha;
  MapAtomSearch best;
  for (int it = 0; it < inner_iters; ++it) {
    std::vector<Matrix> fvals;
    fvals.reserve(t.e_basis.size());
    for (const auto& x : t.e_basis) fvals.push_back(apply_choi(choi, x, pe, r));
    const Matrix qhat = qe.realize();

    // alpha step: top eigenvector of the pairing form
    Matrix h = Matrix::Zero(r * m, r * m);
    for (size_t a = 0; a < t.e_basis.size(); ++a) {
      const Matrix d = kron(fvals[a], qhat);  // legs ((r,m),(qt)) after grouping
      for (int v2 = 0; v2 < r * m; ++v2)
        for (int v = 0; v < r * m; ++v) {
          const auto dblock = d.block(v * qt, v2 * qt, qt, qt);
          h(v2, v) += residual[a].cwiseProduct(dblock.transpose()).sum();
        }
    }
    const auto eig = eig_herm(hermitian_part(h), 1e-6);
    const int top = static_cast<int>(eig.values.size()) - 1;
    if (eig.values(top) <= 1e-14) {
      Matrix g = rng.gaussian_matrix(pe * r, 1);
      choi = tau_c * (g * g.adjoint()) / std::max(g.squaredNorm(), 1e-12);
      continue;
    }
    alpha = eig.vectors.col(top).transpose();

    // f step: exact linear maximization over {C PSD, tr <= tau} via top eigenvector
    const Matrix lift = kron(alpha, Matrix::Identity(qt, qt));
    Matrix grad_c = Matrix::Zero(pe * r, pe * r);
    for (size_t a = 0; a < t.e_basis.size(); ++a) {
      const Matrix b = lift.adjoint() * residual[a] * lift;  // over ((r,m),(qt)) -> legs (r, m*qt)
      const Matrix ga = partial_trace(b * kron(Matrix::Identity(r, r), qhat), {r, m * qt}, {1});
      grad_c += kron(t.e_basis[a].transpose(), ga);
    }
    const auto ceig = eig_herm(hermitian_part(grad_c), 1e-6);
    const int ctop = static_cast<int>(ceig.values.size()) - 1;
    if (ceig.values(ctop) > 0) {
      const Vector cv = ceig.vectors.col(ctop);
      choi = tau_c * (cv * cv.adjoint());
    }
    std::vector<Matrix> fvals2;
    for (const auto& x : t.e_basis) fvals2.push_back(apply_choi(choi, x, pe, r));

    // Q step
    Matrix grad_q = Matrix::Zero(m * qt, m * qt);
    for (size_t a = 0; a < t.e_basis.size(); ++a) {
      const Matrix b = lift.adjoint() * residual[a] * lift;
      grad_q += partial_trace(b * kron(fvals2[a], Matrix::Identity(m * qt, m * qt)),
                              {r, m * qt}, {0});
    }
    qe = cone_linear_max(t.codomain, m, grad_q, tau_q, &qe, 8);

    MapAtom cand;
    // restrict the Choi lift to E
    cand.f = [&] {
      SystemMap f;
      f.domain = t.e;
      f.codomain = full_matrix_system(r);
      f.action.resize(f.codomain->dim(), t.e->dim());
      for (int a = 0; a < t.e->dim(); ++a)
        f.action.col(a) = f.codomain->coefficients(apply_choi(choi, t.e->basis(a), pe, r));
      f.cp_certificate = choi;
      return f;
    }();
    cand.q = qe;
    cand.alpha = alpha;
    std::vector<Matrix> vals = atom_values(cand, t);
    double an = target_norm(vals);
    if (an > 1e-14) {
      double corr = 0;
      for (size_t a = 0; a < vals.size(); ++a) corr += herm_inner(residual[a], vals[a]);
      corr /= an;
      if (corr > best.correlation) {
        best.correlation = corr;
        best.atom = cand;
        best.values = std::move(vals);
      }
    }
  }
  return best;
}

}  // namespace

MapDecomposeResult decompose_restricted_map(const SystemMap& phi, SystemPtr e, double eps,
                                            long budget, uint64_t seed, CertifyOptions opt) {
  if (eps <= 0) throw std::invalid_argument("decompose_restricted_map: eps must be positive");
  MapTarget t;
  t.e = e;
  t.codomain = phi.codomain;
  const int qt = t.codomain->ambient_dim();
  for (int a = 0; a < e->dim(); ++a) {
    const Matrix& x = e->basis(a);
    double res = 0.0;
    if (!phi.domain->contains(x, 1e-8, &res))
      throw DimensionMismatchError("decompose_restricted_map: E is not inside the domain");
    t.e_basis.push_back(x);
    t.values.push_back(phi.apply(x) + eps * omega1(e, x) * Matrix::Identity(qt, qt));
  }

  const int r_cap = opt.p_level_cap > 0 ? opt.p_level_cap : t.e->ambient_dim();
  const int m_cap = opt.q_level_cap > 0 ? opt.q_level_cap : qt;
  const double tnorm = target_norm(t.values);
  const double gate = 1e-7 * (1 + tnorm);

  MapDecomposeResult out;
  out.decomposition.epsilon = eps;

  struct Entry {
    MapAtom atom;
    std::vector<Matrix> values;
    double coeff = 0;
  };
  std::vector<Entry> dict;
  auto push = [&](MapAtom a) {
    std::vector<Matrix> vals = atom_values(a, t);
    const double n = target_norm(vals);
    if (n < 1e-13) return;
    a.alpha /= std::sqrt(n);
    for (auto& v : vals) v /= n;
    dict.push_back({std::move(a), std::move(vals), 0.0});
  };

  // state atom: x -> omega_1(x) 1_T
  {
    MapAtom st;
    st.f = state_map(t.e, Matrix::Identity(t.e->ambient_dim(), t.e->ambient_dim()) /
                              static_cast<double>(t.e->ambient_dim()));
    st.q = unit_element(t.codomain, 1);
    st.alpha = Matrix::Ones(1, 1);
    push(std::move(st));
  }

  long used = 0;
  std::vector<Matrix> residual = t.values;
  double rnorm = tnorm;
  double last_window = rnorm;
  int window = 0;

  for (int round = 0; round < opt.max_atoms; ++round) {
    const int n_atoms = static_cast<int>(dict.size());
    RealMatrix gram(n_atoms, n_atoms);
    RealVector rhs(n_atoms);
    for (int i = 0; i < n_atoms; ++i) {
      double bi = 0;
      for (size_t a = 0; a < t.values.size(); ++a)
        bi += herm_inner(dict[static_cast<size_t>(i)].values[a], t.values[a]);
      rhs(i) = bi;
      for (int j = i; j < n_atoms; ++j) {
        double g = 0;
        for (size_t a = 0; a < t.values.size(); ++a)
          g += herm_inner(dict[static_cast<size_t>(i)].values[a],
                          dict[static_cast<size_t>(j)].values[a]);
        gram(i, j) = g;
        gram(j, i) = g;
      }
    }
    RealVector c = nnls_gram(gram, rhs);
    residual = t.values;
    for (int i = 0; i < n_atoms; ++i) {
      dict[static_cast<size_t>(i)].coeff = c(i);
      if (c(i) != 0.0)
        for (size_t a = 0; a < residual.size(); ++a)
          residual[a] -= c(i) * dict[static_cast<size_t>(i)].values[a];
    }
    rnorm = target_norm(residual);
    if (rnorm <= gate) break;

    if (dict.size() > 8) {
      std::vector<Entry> kept;
      for (auto& en : dict)
        if (en.coeff > 1e-14) kept.push_back(std::move(en));
      if (!kept.empty()) dict = std::move(kept);
    }
    if (++window >= 15) {
      if (rnorm > (1.0 - 1e-3) * last_window) {
        out.note = "stalled";
        break;
      }
      last_window = rnorm;
      window = 0;
    }
    const long cost = static_cast<long>(opt.restarts) * opt.inner_iters;
    if (used + cost > budget) {
      out.note = "budget exhausted";
      break;
    }
    used += cost;

    MapAtomSearch best;
    for (int rs = 0; rs < opt.restarts; ++rs) {
      MapAtomSearch s = search_map_atom_once(
          t, residual, r_cap, m_cap,
          derive_seed(seed, static_cast<uint64_t>(round)) + static_cast<uint64_t>(rs),
          opt.inner_iters);
      if (s.correlation > best.correlation) best = s;
    }
    if (!(best.correlation > 1e-12 * rnorm)) {
      out.note = "no positively correlated atom";
      break;
    }
    best.atom.q = cone_polish(best.atom.q, 60);
    push(std::move(best.atom));
  }

  out.iterations = used;
  for (auto& en : dict) {
    if (en.coeff <= 1e-14) continue;
    MapAtom a = en.atom;
    a.alpha *= std::sqrt(en.coeff);
    out.decomposition.atoms.push_back(std::move(a));
  }

  // combine into a single atom by direct sums
  if (!out.decomposition.atoms.empty()) {
    int r_total = 0, m_total = 0;
    for (const auto& a : out.decomposition.atoms) {
      r_total += a.f.codomain->ambient_dim();
      m_total += a.q.level;
    }
    const int pe = t.e->ambient_dim();
    Matrix choi_sum = Matrix::Zero(pe * r_total, pe * r_total);
    LevelElement q_sum = zero_element(t.codomain, m_total);
    Matrix alpha = Matrix::Zero(1, r_total * m_total);
    int r_off = 0, m_off = 0;
    for (const auto& a : out.decomposition.atoms) {
      const int r = a.f.codomain->ambient_dim();
      const int m = a.q.level;
      // embed the Choi lift: (I_p (x) J) C (I_p (x) J)* with J the block injection
      Matrix j = Matrix::Zero(r_total, r);
      j.block(r_off, 0, r, r) = Matrix::Identity(r, r);
      const Matrix lift = kron(Matrix::Identity(pe, pe), j);
      if (a.f.cp_certificate) choi_sum += lift * (*a.f.cp_certificate) * lift.adjoint();
      for (int b = 0; b < t.codomain->dim(); ++b)
        q_sum.coeff[static_cast<size_t>(b)].block(m_off, m_off, m, m) =
            a.q.coeff[static_cast<size_t>(b)];
      for (int u = 0; u < r; ++u)
        for (int v = 0; v < m; ++v)
          alpha(0, (r_off + u) * m_total + (m_off + v)) = a.alpha(0, u * m + v);
      r_off += r;
      m_off += m;
    }
    SystemMap f;
    f.domain = t.e;
    f.codomain = full_matrix_system(r_total);
    f.action.resize(f.codomain->dim(), t.e->dim());
    for (int a = 0; a < t.e->dim(); ++a)
      f.action.col(a) = f.codomain->coefficients(apply_choi(choi_sum, t.e->basis(a), pe, r_total));
    f.cp_certificate = choi_sum;
    out.f = std::move(f);
    out.q = std::move(q_sum);
    out.alpha = std::move(alpha);

    // recompute the residual of the combined atom
    MapAtom combined{out.f, out.q, out.alpha};
    double acc = 0;
    for (size_t a = 0; a < t.e_basis.size(); ++a)
      acc += (map_atom_value(combined, t.codomain, t.e_basis[a]) - t.values[a]).squaredNorm();
    out.decomposition.residual = std::sqrt(acc);
    out.success = out.decomposition.residual <= 1e-6 * (1 + tnorm);
  }
  return out;
}

std::vector<FactorizationStep> extract_factorization(
    const SystemMap& big_phi, const std::vector<std::pair<SystemPtr, double>>& schedule,
    long budget, uint64_t seed) {
  std::vector<FactorizationStep> steps;
  const int p = big_phi.domain->ambient_dim();
  SystemPtr ambient_full = full_matrix_system(p);

  for (size_t si = 0; si < schedule.size(); ++si) {
    const SystemPtr& e = schedule[si].first;
    const double eps = schedule[si].second;
    if (eps <= 0) throw std::invalid_argument("extract_factorization: eps must be positive");

    FactorizationStep step;
    step.e = e;
    step.eps = eps;

    MapDecomposeResult dec =
        decompose_restricted_map(big_phi, e, eps, budget, derive_seed(seed, si));
    if (!dec.success)
      throw ExtensionSearchFailedError("extract_factorization: decomposition failed",
                                       dec.decomposition.residual);
    step.decomposition_residual = dec.decomposition.residual;

    UcpNormalization norm = normalize_to_ucp(dec.f);
    step.r = norm.rank;

    SystemMap ext = arveson_extend(norm.ucp);  // M_p -> M_r via the Choi lift
    SystemMap incl = inclusion_map(big_phi.domain, ambient_full);
    SystemMap phi = compose(ext, incl);
    phi.cp_certificate = ext.cp_certificate;

    // psi'(A) = alpha_new (A (x) Q) alpha_new*, alpha_new = alpha (B (x) I_M)
    const int r = norm.rank;
    const int m_total = dec.q.level;
    const int qt = big_phi.codomain->ambient_dim();
    const Matrix alpha_new =
        dec.alpha * kron(norm.left_factor, Matrix::Identity(m_total, m_total));
    const Matrix qhat = dec.q.realize();
    SystemPtr mr = full_matrix_system(r);
    std::vector<Matrix> psi_images;
    const Matrix lift = kron(alpha_new, Matrix::Identity(qt, qt));
    for (int a = 0; a < mr->dim(); ++a)
      psi_images.push_back(lift * kron(mr->basis(a), qhat) * lift.adjoint());
    SystemMap psi_prime = map_from_basis_images(mr, big_phi.codomain, psi_images);
    {
      Matrix c = Matrix::Zero(r * qt, r * qt);
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < r; ++j)
          c += kron(matrix_unit(r, i, j),
                    lift * kron(matrix_unit(r, i, j), qhat) * lift.adjoint());
      psi_prime.cp_certificate = hermitian_part(c);
    }
    SystemMap psi = unitalize_psi(psi_prime, Matrix::Identity(r, r) / static_cast<double>(r));

    step.phi = phi;
    step.psi = psi;
    step.phi_ucp = verify_ucp(phi);
    step.psi_ucp = verify_ucp(psi);

    step.basis_errors.resize(e->dim());
    step.basis_norms.resize(e->dim());
    for (int a = 0; a < e->dim(); ++a) {
      const Matrix x = e->basis(a);
      const Matrix err = big_phi.apply(x) - psi.apply(phi.apply(x));
      step.basis_errors(a) = op_norm(err);
      step.basis_norms(a) = op_norm(x);
    }
    step.max_error = step.basis_errors.maxCoeff();
    steps.push_back(std::move(step));
  }
  return steps;
}

ConvergenceAudit convergence_audit(const std::vector<FactorizationStep>& steps) {
  ConvergenceAudit audit;
  if (steps.empty()) throw std::invalid_argument("convergence_audit: no steps");
  for (const auto& s : steps) {
    for (int a = 0; a < s.basis_errors.size(); ++a)
      if (s.basis_errors(a) > (s.eps + 1e-6) * s.basis_norms(a)) audit.bounds_hold = false;
    char row[160];
    std::snprintf(row, sizeof(row), "E_dim=%d eps=%.3e r=%d max_error=%.3e residual=%.3e",
                  s.e->dim(), s.eps, s.r, s.max_error, s.decomposition_residual);
    audit.table.emplace_back(row);
  }
  for (size_t i = 0; i + 1 < steps.size(); ++i) {
    const auto& a = steps[i];
    const auto& b = steps[i + 1];
    const bool same_e = a.e->dim() == b.e->dim() && a.e->ambient_dim() == b.e->ambient_dim();
    if (same_e && b.eps < a.eps && b.max_error > a.max_error + 1e-9)
      audit.monotone_in_eps = false;
  }
  return audit;
}

}  // namespace opsys
