#include "opsys/maps.hpp"

#include <Eigen/QR>
#include <cmath>

namespace opsys {

namespace {

Matrix matrix_unit(int d, int i, int j) {
  Matrix e = Matrix::Zero(d, d);
  e(i, j) = 1;
  return e;
}

}  // namespace

Matrix SystemMap::apply(const Matrix& x) const {
  return codomain->realize(action * domain->coefficients(x));
}

Vector SystemMap::apply_coeffs(const Vector& c) const { return action * c; }

LevelElement SystemMap::apply_level(const LevelElement& x) const {
  LevelElement out = zero_element(codomain, x.level);
  for (int c = 0; c < codomain->dim(); ++c) {
    Matrix k = Matrix::Zero(x.level, x.level);
    for (int a = 0; a < domain->dim(); ++a) k += action(c, a) * x.coeff[static_cast<size_t>(a)];
    out.coeff[static_cast<size_t>(c)] = k;
  }
  return out;
}

Matrix SystemMap::apply_level_realized(const Matrix& xr, int level) const {
  LevelElement x = element_from_realization(domain, level, xr);
  return apply_level(x).realize();
}

bool SystemMap::unital(double tol) const {
  return (apply(domain->unit()) - codomain->unit()).norm() <= tol;
}

bool SystemMap::adjoint_preserving(double tol) const {
  return action.imag().cwiseAbs().maxCoeff() <= tol;
}

SystemMap identity_map(SystemPtr s) {
  SystemMap m;
  m.domain = s;
  m.codomain = s;
  m.action = Matrix::Identity(s->dim(), s->dim());
  if (s->is_full()) m.cp_certificate = choi_matrix(m);
  return m;
}

SystemMap inclusion_map(SystemPtr subsystem, SystemPtr ambient_system) {
  if (subsystem->ambient_dim() != ambient_system->ambient_dim())
    throw DimensionMismatchError("inclusion_map: ambient dimensions differ");
  SystemMap m;
  m.domain = subsystem;
  m.codomain = ambient_system;
  m.action.resize(ambient_system->dim(), subsystem->dim());
  for (int a = 0; a < subsystem->dim(); ++a) {
    double res = 0.0;
    if (!ambient_system->contains(subsystem->basis(a), 1e-8, &res))
      throw DimensionMismatchError("inclusion_map: domain is not a subsystem");
    m.action.col(a) = ambient_system->coefficients(subsystem->basis(a));
  }
  return m;
}

SystemMap state_map(SystemPtr s, const Matrix& density) {
  SystemMap m;
  m.domain = s;
  m.codomain = full_matrix_system(1);
  m.action.resize(1, s->dim());
  for (int a = 0; a < s->dim(); ++a) m.action(0, a) = (density.adjoint() * s->basis(a)).trace();
  // Choi of x -> tr(Wx) on the ambient algebra is W^T, PSD for a state.
  m.cp_certificate = density.transpose();
  return m;
}

SystemMap map_from_basis_images(SystemPtr domain, SystemPtr codomain,
                                const std::vector<Matrix>& images) {
  if (static_cast<int>(images.size()) != domain->dim())
    throw DimensionMismatchError("map_from_basis_images: image count mismatch");
  SystemMap m;
  m.domain = std::move(domain);
  m.codomain = std::move(codomain);
  m.action.resize(m.codomain->dim(), m.domain->dim());
  for (size_t a = 0; a < images.size(); ++a)
    m.action.col(static_cast<Eigen::Index>(a)) = m.codomain->coefficients(images[a]);
  return m;
}

SystemMap compose(const SystemMap& second, const SystemMap& first) {
  if (second.domain->ambient_dim() != first.codomain->ambient_dim())
    throw DimensionMismatchError("compose: interface ambient dimensions differ");
  SystemMap m;
  m.domain = first.domain;
  m.codomain = second.codomain;
  m.action.resize(second.codomain->dim(), first.domain->dim());
  for (int a = 0; a < first.domain->dim(); ++a) {
    const Matrix mid = first.codomain->realize(first.action.col(a));
    m.action.col(a) = second.action * second.domain->coefficients(mid);
  }
  if (first.cp_certificate && second.cp_certificate) {
    const int p = first.domain->ambient_dim();
    const int q1 = first.codomain->ambient_dim();
    const int q2 = second.codomain->ambient_dim();
    Matrix c = Matrix::Zero(p * q2, p * q2);
    for (int i = 0; i < p; ++i)
      for (int j = 0; j < p; ++j) {
        const Matrix mid = apply_choi(*first.cp_certificate, matrix_unit(p, i, j), p, q1);
        c += kron(matrix_unit(p, i, j), apply_choi(*second.cp_certificate, mid, q1, q2));
      }
    m.cp_certificate = c;
  }
  return m;
}

SystemMap tensor_maps(const SystemMap& a, const SystemMap& b) {
  TensorSystem dom = make_tensor_system(a.domain, b.domain);
  TensorSystem cod = make_tensor_system(a.codomain, b.codomain);
  SystemMap m;
  m.domain = dom.product;
  m.codomain = cod.product;
  m.action = kron(a.action, b.action);
  if (a.cp_certificate && b.cp_certificate) {
    const int p1 = a.domain->ambient_dim(), q1 = a.codomain->ambient_dim();
    const int p2 = b.domain->ambient_dim(), q2 = b.codomain->ambient_dim();
    Matrix c = kron(*a.cp_certificate, *b.cp_certificate);
    m.cp_certificate = permute_legs(c, {p1, q1, p2, q2}, {0, 2, 1, 3});
  }
  return m;
}

Matrix choi_matrix(const SystemMap& m) {
  if (!m.domain->is_full())
    throw DomainNotFullError("choi_matrix: domain is not a full matrix algebra");
  const int p = m.domain->ambient_dim();
  const int q = m.codomain->ambient_dim();
  Matrix c = Matrix::Zero(p * q, p * q);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j)
      c += kron(matrix_unit(p, i, j), m.apply(matrix_unit(p, i, j)));
  return c;
}

Matrix apply_choi(const Matrix& choi, const Matrix& x, int p, int q) {
  if (choi.rows() != p * q || x.rows() != p)
    throw DimensionMismatchError("apply_choi: dimension mismatch");
  return partial_trace(kron(x.transpose(), Matrix::Identity(q, q)) * choi, {p, q}, {0});
}

SystemMap map_from_choi(SystemPtr domain_full, SystemPtr codomain, const Matrix& choi) {
  if (!domain_full->is_full())
    throw DomainNotFullError("map_from_choi: domain is not a full matrix algebra");
  const int p = domain_full->ambient_dim();
  const int q = codomain->ambient_dim();
  std::vector<Matrix> images;
  images.reserve(static_cast<size_t>(domain_full->dim()));
  for (int a = 0; a < domain_full->dim(); ++a)
    images.push_back(apply_choi(choi, domain_full->basis(a), p, q));
  SystemMap m = map_from_basis_images(domain_full, std::move(codomain), images);
  m.cp_certificate = choi;
  return m;
}

bool is_cp_full(const SystemMap& m, double tol) {
  return min_eig(choi_matrix(m)) >= -tol;
}

namespace {

// Extension feasibility: one PSD block C on M_{p*q} constrained to agree with
// the map on every domain basis element.
FeasibilityProblem extension_problem(const SystemMap& m) {
  const int p = m.domain->ambient_dim();
  const int q = m.codomain->ambient_dim();
  FeasibilityProblem fp;
  fp.block_dims = {p * q};
  const Complex half(0.5, 0), halfi(0, 0.5);
  for (int a = 0; a < m.domain->dim(); ++a) {
    const Matrix b_t = m.domain->basis(a).transpose();
    const Matrix img = m.codomain->realize(m.action.col(a));
    for (int s = 0; s < q; ++s)
      for (int t = s; t < q; ++t) {
        const Matrix n = kron(b_t, matrix_unit(q, t, s));
        FeasibilityConstraint re;
        re.coeff = {half * (n + n.adjoint())};
        re.rhs = img(s, t).real();
        fp.constraints.push_back(std::move(re));
        if (t > s) {
          FeasibilityConstraint im;
          im.coeff = {-halfi * (n - n.adjoint())};
          im.rhs = img(s, t).imag();
          fp.constraints.push_back(std::move(im));
        }
      }
  }
  return fp;
}

double extension_agreement(const SystemMap& m, const Matrix& choi) {
  const int p = m.domain->ambient_dim();
  const int q = m.codomain->ambient_dim();
  double worst = 0.0;
  for (int a = 0; a < m.domain->dim(); ++a) {
    const Matrix img = m.codomain->realize(m.action.col(a));
    worst = std::max(worst, (apply_choi(choi, m.domain->basis(a), p, q) - img).norm());
  }
  return worst;
}

// Projected subgradient descent on the bottom eigenvalue of Phi^(k)(P) over
// normalized positives P in M_k(S)^+.
struct WitnessCandidate {
  bool found = false;
  LevelElement p;
  double min_eig = 0.0;
};

WitnessCandidate search_cp_witness(const SystemMap& m, int level, uint64_t seed,
                                   double needed = -1e-8) {
  const int qc = m.codomain->ambient_dim();
  std::vector<Matrix> images;
  for (int a = 0; a < m.domain->dim(); ++a)
    images.push_back(m.codomain->realize(m.action.col(a)));

  WitnessCandidate best;
  best.min_eig = std::numeric_limits<double>::infinity();
  for (int restart = 0; restart < 8; ++restart) {
    LevelElement p = random_positive(m.domain, level, derive_seed(seed, 131 * level + restart));
    const double tr0 = p.realize().trace().real();
    if (tr0 > 1e-12) p *= level / tr0;
    for (int it = 0; it < 80; ++it) {
      Matrix y = Matrix::Zero(level * qc, level * qc);
      for (int a = 0; a < m.domain->dim(); ++a)
        y += kron(p.coeff[static_cast<size_t>(a)], images[static_cast<size_t>(a)]);
      const auto eig = eig_herm(hermitian_part(y), 1e-4);
      const double lmin = eig.values(0);
      if (lmin < best.min_eig) {
        best.min_eig = lmin;
        best.p = p;
      }
      if (lmin <= needed * 4) break;  // deep enough, polish below
      // gradient of lambda_min wrt coeff[a]: [w_i* M_a w_j]
      const Vector w = eig.vectors.col(0);
      LevelElement g = zero_element(m.domain, level);
      for (int a = 0; a < m.domain->dim(); ++a) {
        Matrix ga(level, level);
        for (int i = 0; i < level; ++i)
          for (int j = 0; j < level; ++j)
            ga(i, j) = w.segment(i * qc, qc).adjoint() * images[static_cast<size_t>(a)] *
                       w.segment(j * qc, qc);
        g.coeff[static_cast<size_t>(a)] = ga;
      }
      double gn = 0.0;
      for (const auto& k : g.coeff) gn += k.squaredNorm();
      gn = std::sqrt(gn);
      if (gn < 1e-14) break;
      p -= (0.35 / gn) * g;
      p = cone_polish(p, 6);
      const double tr = p.realize().trace().real();
      if (tr > 1e-10)
        p *= level / tr;
      else
        break;
    }
  }
  if (best.min_eig < std::numeric_limits<double>::infinity()) {
    best.p = cone_polish(best.p, 60);
    Matrix y = Matrix::Zero(level * qc, level * qc);
    for (int a = 0; a < m.domain->dim(); ++a)
      y += kron(best.p.coeff[static_cast<size_t>(a)], images[static_cast<size_t>(a)]);
    best.min_eig = min_eig(hermitian_part(y));
    best.found = best.min_eig <= needed && cone_member(best.p, 1e-9);
  }
  return best;
}

}  // namespace

CpCertificate is_cp_subsystem(const SystemMap& m, double tol, int budget, uint64_t seed) {
  if (!m.adjoint_preserving(1e-8))
    throw NonHermitianError("is_cp_subsystem: map is not adjoint-preserving");
  CpCertificate cert;

  if (m.cp_certificate) {
    const double agree = extension_agreement(m, *m.cp_certificate);
    const double lmin = min_eig(*m.cp_certificate);
    if (agree <= tol && lmin >= -tol) {
      cert.kind = CpCertificate::Kind::CertifiedMember;
      cert.choi = *m.cp_certificate;
      cert.choi_min_eig = lmin;
      cert.agreement_residual = agree;
      return cert;
    }
  }

  const int p = m.domain->ambient_dim();
  if (m.domain->is_full()) {
    const Matrix c = choi_matrix(m);
    const double lmin = min_eig(c);
    if (lmin >= -tol) {
      cert.kind = CpCertificate::Kind::ExactMember;
      cert.choi = c;
      cert.choi_min_eig = lmin;
      return cert;
    }
    // the matrix-unit block element realizes the Choi under amplification
    LevelElement maxent = zero_element(m.domain, p);
    Matrix r = Matrix::Zero(p * p, p * p);
    for (int i = 0; i < p; ++i)
      for (int j = 0; j < p; ++j) r += kron(matrix_unit(p, i, j), matrix_unit(p, i, j));
    maxent = element_from_realization(m.domain, p, r);
    cert.kind = CpCertificate::Kind::RefutedAtLevel;
    cert.witness = maxent;
    cert.witness_level = p;
    cert.witness_min_eig = lmin;
    cert.levels_scanned = p;
    return cert;
  }

  FeasibilityOutcome fo = solve_feasibility(extension_problem(m), tol * 0.1, budget);
  cert.iterations = fo.iterations;
  if (fo.status == FeasibilityStatus::Feasible) {
    cert.kind = CpCertificate::Kind::CertifiedMember;
    cert.choi = project_psd(fo.witness[0], 1e-6);
    cert.choi_min_eig = min_eig(fo.witness[0]);
    cert.agreement_residual = extension_agreement(m, cert.choi);
    return cert;
  }
  if (fo.status == FeasibilityStatus::Infeasible) {
    cert.levels_scanned = p;
    for (int k = 1; k <= p; ++k) {
      WitnessCandidate w = search_cp_witness(m, k, derive_seed(seed, k));
      if (w.found) {
        cert.kind = CpCertificate::Kind::RefutedAtLevel;
        cert.witness = w.p;
        cert.witness_level = k;
        cert.witness_min_eig = w.min_eig;
        return cert;
      }
    }
  }
  cert.kind = CpCertificate::Kind::Undecided;
  return cert;
}

SystemMap arveson_extend(const SystemMap& m, double tol, int budget,
                         std::optional<Matrix> choi_hint) {
  const int p = m.domain->ambient_dim();
  if (!choi_hint && m.cp_certificate) choi_hint = m.cp_certificate;
  if (choi_hint) {
    const double agree = extension_agreement(m, *choi_hint);
    if (agree <= tol && min_eig(*choi_hint) >= -tol)
      return map_from_choi(full_matrix_system(p), m.codomain, *choi_hint);
  }
  FeasibilityOutcome fo = solve_feasibility(extension_problem(m), tol * 0.1, budget);
  if (fo.status != FeasibilityStatus::Feasible)
    throw ExtensionSearchFailedError("arveson_extend: no CP extension found", fo.residual);
  return map_from_choi(full_matrix_system(p), m.codomain, project_psd(fo.witness[0], 1e-6));
}

UcpNormalization normalize_to_ucp(const SystemMap& f, double rank_cutoff) {
  if (!f.codomain->is_full())
    throw DomainNotFullError("normalize_to_ucp: codomain must be a full matrix algebra");
  const int n = f.codomain->ambient_dim();
  UcpNormalization out;
  out.unit_image = hermitian_part(f.apply(f.domain->unit()));
  if ((out.unit_image - Matrix::Identity(n, n)).norm() <= 1e-10 * (1 + out.unit_image.norm())) {
    out.ucp = f;
    out.rank = n;
    out.basis_change = Matrix::Identity(n, n);
    out.support_projection = Matrix::Identity(n, n);
    out.sqrt_unit = Matrix::Identity(n, n);
    out.invsqrt_unit = Matrix::Identity(n, n);
    out.left_factor = Matrix::Identity(n, n);
    return out;
  }
  const auto eig = eig_herm(out.unit_image);
  const double lmax = eig.values.size() ? std::max(eig.values.maxCoeff(), 0.0) : 0.0;
  const double cut = rank_cutoff * std::max(lmax, 0.0);
  int r = 0;
  for (int i = 0; i < eig.values.size(); ++i)
    if (eig.values(i) > cut) ++r;
  if (r == 0) throw ZeroUnitImageError("normalize_to_ucp: f(1) vanishes");
  out.rank = r;

  // support eigenvectors first
  Matrix u(n, n);
  RealVector vals(n);
  for (int i = 0; i < n; ++i) {
    u.col(i) = eig.vectors.col(n - 1 - i);
    vals(i) = eig.values(n - 1 - i);
  }
  out.basis_change = u;
  out.support_projection = u.leftCols(r) * u.leftCols(r).adjoint();
  RealVector sq = vals.cwiseMax(0.0).cwiseSqrt();
  RealVector isq = RealVector::Zero(n);
  for (int i = 0; i < r; ++i) isq(i) = 1.0 / sq(i);
  out.sqrt_unit = u * sq.asDiagonal() * u.adjoint();
  out.invsqrt_unit = u * isq.asDiagonal() * u.adjoint();
  out.left_factor = out.sqrt_unit * u.leftCols(r);
  const Matrix l = out.invsqrt_unit * u.leftCols(r);  // n x r

  std::vector<Matrix> images;
  for (int a = 0; a < f.domain->dim(); ++a) {
    const Matrix fx = f.codomain->realize(f.action.col(a));
    images.push_back(l.adjoint() * fx * l);
  }
  out.ucp = map_from_basis_images(f.domain, full_matrix_system(r), images);
  if (f.cp_certificate) {
    const int p = f.domain->ambient_dim();
    const Matrix il = kron(Matrix::Identity(p, p), l);
    out.ucp.cp_certificate = il.adjoint() * (*f.cp_certificate) * il;
  }
  return out;
}

Matrix reassemble_from_normalization(const UcpNormalization& n, const Matrix& x) {
  return n.left_factor * n.ucp.apply(x) * n.left_factor.adjoint();
}

SystemMap unitalize_psi(const SystemMap& psi_prime, const Matrix& state_density, double tol) {
  if (!psi_prime.domain->is_full())
    throw DomainNotFullError("unitalize_psi: domain must be a full matrix algebra");
  const double nu = map_norm_at_unit(psi_prime);
  if (nu <= 1e-14) throw ZeroUnitImageError("unitalize_psi: psi'(I) vanishes");
  const Matrix unit_img = psi_prime.apply(psi_prime.domain->unit());
  const Matrix defect = psi_prime.codomain->unit() - unit_img / nu;
  double span_res = 0.0;
  psi_prime.codomain->contains(defect, 1e-6, &span_res);
  if (min_eig(hermitian_part(defect)) < -tol || span_res > 1e-6)
    throw DefectNotPositiveError("unitalize_psi: 1_T - psi'(I)/|psi'| is not positive in T");

  SystemMap out;
  out.domain = psi_prime.domain;
  out.codomain = psi_prime.codomain;
  Vector defect_coeffs = out.codomain->coefficients(defect);
  Vector omega_row(psi_prime.domain->dim());
  for (int a = 0; a < psi_prime.domain->dim(); ++a)
    omega_row(a) = (state_density.adjoint() * psi_prime.domain->basis(a)).trace();
  out.action = psi_prime.action / nu + defect_coeffs * omega_row.transpose();
  if (psi_prime.cp_certificate) {
    const Matrix d_psd = project_psd(hermitian_part(defect), 1e-6);
    out.cp_certificate =
        *psi_prime.cp_certificate / nu + kron(state_density.transpose(), d_psd);
  }
  return out;
}

SystemMap random_ucp_to_matrices(SystemPtr s, int k, uint64_t seed) {
  const int p = s->ambient_dim();
  const int e = k;  // Stinespring environment
  Rng rng(seed);
  Matrix g = rng.gaussian_matrix(p * e, k);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix v = qr.householderQ() * Matrix::Identity(p * e, k);  // isometry C^k -> C^p (x) C^e

  auto phi = [&](const Matrix& x) { return (v.adjoint() * kron(x, Matrix::Identity(e, e)) * v).eval(); };
  std::vector<Matrix> images;
  for (int a = 0; a < s->dim(); ++a) images.push_back(phi(s->basis(a)));
  SystemMap m = map_from_basis_images(std::move(s), full_matrix_system(k), images);

  Matrix choi = Matrix::Zero(p * k, p * k);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j) choi += kron(matrix_unit(p, i, j), phi(matrix_unit(p, i, j)));
  m.cp_certificate = choi;
  return m;
}

double map_norm_at_unit(const SystemMap& m) { return op_norm(m.apply(m.domain->unit())); }

bool verify_ucp(const SystemMap& m, double tol) {
  if (!m.unital(tol)) return false;
  return is_cp_subsystem(m, tol).certified();
}

}  // namespace opsys
