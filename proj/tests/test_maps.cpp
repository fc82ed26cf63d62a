#include "doctest.h"
#include "opsys/maps.hpp"

using namespace opsys;

namespace {

Matrix unit_at(int d, int i, int j) {
  Matrix e = Matrix::Zero(d, d);
  e(i, j) = 1;
  return e;
}

SystemMap transpose_map(int d) {
  SystemPtr s = full_matrix_system(d);
  std::vector<Matrix> images;
  for (int a = 0; a < s->dim(); ++a) images.push_back(s->basis(a).transpose());
  return map_from_basis_images(s, s, images);
}

SystemMap trace_state_map(int d) {
  SystemPtr s = full_matrix_system(d);
  std::vector<Matrix> images;
  for (int a = 0; a < s->dim(); ++a)
    images.push_back(s->basis(a).trace() * Matrix::Identity(d, d) / static_cast<double>(d));
  return map_from_basis_images(s, s, images);
}

}  // namespace

TEST_CASE("is_cp_full: identity yes, transpose no, trace-state yes") {
  CHECK(is_cp_full(identity_map(full_matrix_system(2))));
  CHECK_FALSE(is_cp_full(transpose_map(2)));
  CHECK(is_cp_full(trace_state_map(2)));
}

TEST_CASE("choi matrix of the trace-state map on M_2 is I/2") {
  const Matrix c = choi_matrix(trace_state_map(2));
  CHECK((c - Matrix::Identity(4, 4) / 2.0).norm() <= 1e-12);
}

TEST_CASE("choi_matrix requires a full domain") {
  SystemMap inc = inclusion_map(tri3_system(), full_matrix_system(3));
  CHECK_THROWS_AS(choi_matrix(inc), DomainNotFullError);
}

TEST_CASE("restriction of a CP map to tri3 is certified") {
  SystemPtr tri = tri3_system();
  SystemMap ucp = random_ucp_to_matrices(tri, 2, 3);
  CHECK(is_cp_subsystem(ucp).certified());
  CHECK(ucp.unital(1e-9));
  // the same map without its construction certificate goes through the SDP
  SystemMap bare = ucp;
  bare.cp_certificate.reset();
  const auto cert = is_cp_subsystem(bare);
  CHECK(cert.kind == CpCertificate::Kind::CertifiedMember);
  CHECK(min_eig(cert.choi) >= -1e-8);
  CHECK(cert.agreement_residual <= 1e-8);
}

TEST_CASE("the E12+E21 -> 3 functional is refuted at level 1") {
  SystemPtr s = make_system(2, {unit_at(2, 0, 1)});
  // I -> 1, (E12+E21)/sqrt2 basis scaled: express through images of the basis
  std::vector<Matrix> images;
  for (int a = 0; a < s->dim(); ++a) {
    // f(alpha I + beta (E12+E21) + gamma i(E12-E21)) = alpha + 3 beta
    const Matrix& b = s->basis(a);
    Matrix img(1, 1);
    img(0, 0) = b(0, 0).real() + 3.0 * b(0, 1).real();
    images.push_back(img);
  }
  SystemMap f = map_from_basis_images(s, full_matrix_system(1), images);
  CHECK(f.apply(Matrix::Identity(2, 2))(0, 0).real() == doctest::Approx(1.0));
  CHECK(f.apply(unit_at(2, 0, 1) + unit_at(2, 1, 0))(0, 0).real() == doctest::Approx(3.0));
  const auto cert = is_cp_subsystem(f);
  REQUIRE(cert.kind == CpCertificate::Kind::RefutedAtLevel);
  CHECK(cert.witness_level == 1);
  CHECK(cert.witness_min_eig <= -1e-8);
  // the witness is a genuine positive element mapped to a negative value
  CHECK(cone_member(cert.witness, 1e-9));
  CHECK(min_eig(f.apply_level(cert.witness).realize()) <= -1e-8);
}

TEST_CASE("is_cp_full and is_cp_subsystem agree on full domains") {
  Rng rng(17);
  int checked = 0;
  for (int t = 0; t < 40; ++t) {
    const int p = 2 + (t % 2);
    const int q = 2 + ((t / 2) % 2);
    SystemPtr dom = full_matrix_system(p);
    // random adjoint-preserving map with a bounded Choi spectrum
    Matrix c = rng.gaussian_herm(p * q);
    SystemMap m = map_from_choi(dom, full_matrix_system(q), c);
    m.cp_certificate.reset();
    const bool full_test = is_cp_full(m);
    const auto cert = is_cp_subsystem(m);
    REQUIRE(cert.kind != CpCertificate::Kind::Undecided);
    CHECK(full_test == cert.certified());
    ++checked;
  }
  CHECK(checked == 40);
}

TEST_CASE("arveson extension agrees on the subsystem and is CP") {
  SystemPtr tri = tri3_system();
  SystemMap ucp = random_ucp_to_matrices(tri, 2, 11);
  SystemMap bare = ucp;
  bare.cp_certificate.reset();
  SystemMap ext = arveson_extend(bare);
  CHECK(ext.domain->is_full());
  for (int a = 0; a < tri->dim(); ++a)
    CHECK((ext.apply(tri->basis(a)) - ucp.apply(tri->basis(a))).norm() <= 1e-7);
  CHECK(is_cp_full(ext, 1e-7));
  CHECK(ext.unital(1e-7));  // the unit lies in the subsystem
}

TEST_CASE("normalize_to_ucp: already unital maps are fixed points") {
  SystemPtr tri = tri3_system();
  SystemMap ucp = random_ucp_to_matrices(tri, 2, 5);
  const auto norm = normalize_to_ucp(ucp);
  CHECK(norm.rank == 2);
  CHECK((norm.ucp.action - ucp.action).norm() <= 1e-8);
  CHECK(norm.ucp.unital(1e-8));
}

TEST_CASE("normalize_to_ucp compresses a rank-deficient unit image") {
  SystemPtr e = span_identity_system(1);
  // f: span{1} in M_1 -> M_2, f(1) = diag(2, 0)
  Matrix img = Matrix::Zero(2, 2);
  img(0, 0) = 2;
  SystemMap f = map_from_basis_images(e, full_matrix_system(2), {img});
  f.cp_certificate = img.transpose();  // Choi of t -> t * img on M_1
  const auto norm = normalize_to_ucp(f);
  CHECK(norm.rank == 1);
  CHECK(norm.ucp.apply(Matrix::Identity(1, 1))(0, 0).real() == doctest::Approx(1.0));
  CHECK_THROWS_AS(normalize_to_ucp(map_from_basis_images(e, full_matrix_system(2),
                                                         {Matrix::Zero(2, 2)})),
                  ZeroUnitImageError);
}

TEST_CASE("normalize_to_ucp reassembly identity on random CP maps") {
  // f = compression of a random CP map with deliberately singular f(1)
  SystemPtr tri = tri3_system();
  Rng rng(29);
  for (uint64_t t = 0; t < 4; ++t) {
    SystemMap ucp = random_ucp_to_matrices(tri, 3, 40 + t);
    // conjugate by a rank-deficient matrix to break unitality
    Matrix k = Matrix::Zero(3, 3);
    k(0, 0) = 1.4;
    k(1, 1) = 0.7;  // third row zero: f(1) singular
    std::vector<Matrix> images;
    for (int a = 0; a < tri->dim(); ++a)
      images.push_back(k.adjoint() * ucp.apply(tri->basis(a)) * k);
    SystemMap f = map_from_basis_images(tri, full_matrix_system(3), images);
    const Matrix ik = kron(Matrix::Identity(3, 3), k);
    f.cp_certificate = ik.adjoint() * (*ucp.cp_certificate) * ik;

    const auto norm = normalize_to_ucp(f);
    CHECK(norm.rank == 2);
    CHECK(norm.ucp.unital(1e-8));
    CHECK(is_cp_subsystem(norm.ucp).certified());
    for (int a = 0; a < tri->dim(); ++a) {
      const Matrix x = tri->basis(a);
      CHECK((reassemble_from_normalization(norm, x) - f.apply(x)).norm() <= 1e-8);
    }
    // rank equals the count of unit-image eigenvalues above the cutoff
    const auto eig = eig_herm(f.apply(Matrix::Identity(3, 3)));
    int r = 0;
    for (int i = 0; i < eig.values.size(); ++i)
      if (eig.values(i) > 1e-8 * eig.values.maxCoeff()) ++r;
    CHECK(norm.rank == r);
  }
}

TEST_CASE("unitalize_psi: unital input is returned unchanged, scaled input is unitalized") {
  SystemPtr m2 = full_matrix_system(2);
  SystemMap ucp = random_ucp_to_matrices(m2, 2, 8);
  const Matrix w = Matrix::Identity(2, 2) / 2.0;
  SystemMap same = unitalize_psi(ucp, w);
  CHECK((same.action - ucp.action).norm() <= 1e-9);

  SystemMap scaled = ucp;
  scaled.action *= 0.5;
  if (scaled.cp_certificate) *scaled.cp_certificate *= 0.5;
  SystemMap fixed = unitalize_psi(scaled, w);
  CHECK(fixed.unital(1e-9));
  CHECK(is_cp_subsystem(fixed).certified());
}

TEST_CASE("unitalize_psi guards: vanishing unit image and the defect formula") {
  SystemPtr m2 = full_matrix_system(2);
  SystemMap zero;
  zero.domain = m2;
  zero.codomain = m2;
  zero.action = Matrix::Zero(m2->dim(), m2->dim());
  CHECK_THROWS_AS(unitalize_psi(zero, Matrix::Identity(2, 2) / 2.0), ZeroUnitImageError);

  // with the norm taken at the unit, the defect of a congruence map is PSD
  // and the formula is reproduced literally
  Matrix k(2, 2);
  k << 1, 0, 0, 2;
  std::vector<Matrix> images;
  for (int a = 0; a < m2->dim(); ++a) images.push_back(k * m2->basis(a) * k);
  SystemMap psi_prime = map_from_basis_images(m2, m2, images);
  const double nu = map_norm_at_unit(psi_prime);
  CHECK(nu == doctest::Approx(4.0));
  const Matrix w = Matrix::Identity(2, 2) / 2.0;
  SystemMap psi = unitalize_psi(psi_prime, w);
  CHECK(psi.unital(1e-9));
  Rng rng(44);
  for (int t = 0; t < 10; ++t) {
    const Matrix a = rng.gaussian_herm(2);
    const Matrix defect =
        Matrix::Identity(2, 2) - psi_prime.apply(Matrix::Identity(2, 2)) / nu;
    const Matrix expect = psi_prime.apply(a) / nu + (w.adjoint() * a).trace() * defect;
    CHECK((psi.apply(a) - expect).norm() <= 1e-10 * (1 + expect.norm()));
  }
}

TEST_CASE("composition of CP maps stays CP") {
  SystemPtr tri = tri3_system();
  for (uint64_t t = 0; t < 5; ++t) {
    SystemMap a = random_ucp_to_matrices(tri, 2, 50 + t);
    SystemMap b = random_ucp_to_matrices(full_matrix_system(2), 3, 60 + t);
    SystemMap c = compose(b, a);
    CHECK(c.unital(1e-8));
    CHECK(is_cp_subsystem(c).certified());
  }
}

TEST_CASE("tensor of UCP maps is UCP and acts as the product on tensors") {
  SystemPtr tri = tri3_system();
  SystemPtr m2 = full_matrix_system(2);
  SystemMap phi = random_ucp_to_matrices(tri, 2, 70);
  SystemMap psi = random_ucp_to_matrices(m2, 2, 71);
  SystemMap tp = tensor_maps(phi, psi);
  CHECK(tp.unital(1e-8));
  CHECK(is_cp_subsystem(tp).certified());

  // product action on an elementary tensor
  Rng rng(72);
  Matrix x = tri->realize(tri->coefficients(rng.gaussian_herm(3)));
  Matrix y = rng.gaussian_herm(2);
  const Matrix lhs = tp.apply(kron(x, y));
  const Matrix rhs = kron(phi.apply(x), psi.apply(y));
  CHECK((lhs - rhs).norm() <= 1e-9 * (1 + rhs.norm()));

  // identity (x) identity = identity
  SystemMap ii = tensor_maps(identity_map(m2), identity_map(m2));
  Matrix z = rng.gaussian_herm(4);
  CHECK((ii.apply(z) - z).norm() <= 1e-10);

  // product of states is a state
  SystemMap sa = state_map(tri, Matrix::Identity(3, 3) / 3.0);
  SystemMap sb = state_map(m2, Matrix::Identity(2, 2) / 2.0);
  SystemMap ss = tensor_maps(sa, sb);
  CHECK(ss.unital(1e-9));
  CHECK(is_cp_subsystem(ss).certified());
}

TEST_CASE("tensor of UCP maps sends min-cone members to PSD matrices") {
  SystemPtr tri = tri3_system();
  TensorSystem ts = make_tensor_system(tri, tri);
  SystemMap phi = random_ucp_to_matrices(tri, 2, 80);
  SystemMap psi = random_ucp_to_matrices(tri, 3, 81);
  for (uint64_t t = 0; t < 5; ++t) {
    LevelElement x = random_positive(ts.product, 1, 90 + t);
    Matrix y = Matrix::Zero(6, 6);
    for (int a = 0; a < tri->dim(); ++a)
      for (int b = 0; b < tri->dim(); ++b)
        y += x.coeff[static_cast<size_t>(ts.index(a, b))](0, 0) *
             kron(phi.apply(tri->basis(a)), psi.apply(tri->basis(b)));
    CHECK(min_eig(hermitian_part(y)) >= -1e-8);
  }
}

TEST_CASE("random_ucp_to_matrices: compression form is UCP") {
  SystemPtr tri = tri3_system();
  Rng rng(99);
  Matrix g = rng.gaussian_matrix(3, 2);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix v = qr.householderQ() * Matrix::Identity(3, 2);
  std::vector<Matrix> images;
  for (int a = 0; a < tri->dim(); ++a) images.push_back(v.adjoint() * tri->basis(a) * v);
  SystemMap comp = map_from_basis_images(tri, full_matrix_system(2), images);
  CHECK(comp.unital(1e-9));
  CHECK(is_cp_subsystem(comp).certified());
}
