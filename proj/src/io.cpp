#include "opsys/io.hpp"

#include <fstream>

namespace opsys {

const char* kToolVersion = "opsys 0.1.0";

Json matrix_to_json(const Matrix& m) {
  Json j = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      j.push_back(Json::array({m(i, c).real(), m(i, c).imag()}));
  return j;
}

Matrix matrix_from_json(const Json& j, int rows, int cols) {
  if (!j.is_array() || static_cast<int>(j.size()) != rows * cols)
    throw MalformedCertificateError("matrix entry count mismatch");
  Matrix m(rows, cols);
  int idx = 0;
  for (int i = 0; i < rows; ++i)
    for (int c = 0; c < cols; ++c) {
      const auto& e = j[static_cast<size_t>(idx++)];
      if (!e.is_array() || e.size() != 2)
        throw MalformedCertificateError("matrix entries must be [re, im] pairs");
      m(i, c) = Complex(e[0].get<double>(), e[1].get<double>());
    }
  return m;
}

Json system_to_json(const SystemPtr& s) {
  Json j;
  j["ambient_dim"] = s->ambient_dim();
  Json gens = Json::array();
  for (const auto& g : s->input_generators()) gens.push_back(matrix_to_json(g));
  j["generators"] = gens;
  return j;
}

SystemPtr system_from_json(const Json& j) {
  if (!j.contains("ambient_dim") || !j.contains("generators"))
    throw MalformedCertificateError("system file needs ambient_dim and generators");
  const int d = j["ambient_dim"].get<int>();
  std::vector<Matrix> gens;
  for (const auto& g : j["generators"]) gens.push_back(matrix_from_json(g, d, d));
  return make_system(d, gens);
}

Json element_to_json(const TensorSystem& ts, const LevelElement& x) {
  Json j;
  j["factors"] = Json::array({system_to_json(ts.left), system_to_json(ts.right)});
  j["level"] = x.level;
  Json coeffs = Json::array();
  for (const auto& k : x.coeff) coeffs.push_back(matrix_to_json(k));
  j["coeffs"] = coeffs;
  return j;
}

std::pair<TensorSystem, LevelElement> element_from_json(const Json& j) {
  if (!j.contains("factors") || !j.contains("level") || !j.contains("coeffs"))
    throw MalformedCertificateError("element file needs factors, level, coeffs");
  TensorSystem ts = make_tensor_system(system_from_json(j["factors"][0]),
                                       system_from_json(j["factors"][1]));
  const int level = j["level"].get<int>();
  LevelElement x = zero_element(ts.product, level);
  const auto& coeffs = j["coeffs"];
  if (static_cast<int>(coeffs.size()) != ts.product->dim())
    throw MalformedCertificateError("element coefficient count mismatch");
  for (int a = 0; a < ts.product->dim(); ++a)
    x.coeff[static_cast<size_t>(a)] = matrix_from_json(coeffs[static_cast<size_t>(a)], level, level);
  return {std::move(ts), std::move(x)};
}

namespace {

Json system_ref_to_json(const SystemPtr& s) {
  if (s->is_full()) return Json{{"full", s->ambient_dim()}};
  return system_to_json(s);
}

SystemPtr system_ref_from_json(const Json& j) {
  if (j.contains("full")) return full_matrix_system(j["full"].get<int>());
  return system_from_json(j);
}

}  // namespace

Json map_to_json(const SystemMap& m) {
  Json j;
  j["domain"] = system_ref_to_json(m.domain);
  j["codomain"] = system_ref_to_json(m.codomain);
  j["action"] = matrix_to_json(m.action);
  return j;
}

SystemMap map_from_json(const Json& j) {
  if (!j.contains("domain") || !j.contains("codomain") || !j.contains("action"))
    throw MalformedCertificateError("map file needs domain, codomain, action");
  SystemMap m;
  m.domain = system_ref_from_json(j["domain"]);
  m.codomain = system_ref_from_json(j["codomain"]);
  m.action = matrix_from_json(j["action"], m.codomain->dim(), m.domain->dim());
  return m;
}

Json certificate_to_json(const TensorSystem& ts, const MaxDecomposition& d, bool success) {
  Json j;
  j["kind"] = success ? "member" : "fail";
  j["epsilon"] = d.epsilon;
  j["residual"] = d.residual;
  Json atoms = Json::array();
  for (const auto& a : d.atoms) {
    Json ja;
    ja["k"] = a.k();
    ja["l"] = a.l();
    Json pc = Json::array();
    for (const auto& k : a.p.coeff) pc.push_back(matrix_to_json(k));
    ja["P"] = pc;
    Json qc = Json::array();
    for (const auto& k : a.q.coeff) qc.push_back(matrix_to_json(k));
    ja["Q"] = qc;
    ja["alpha"] = matrix_to_json(a.alpha);
    atoms.push_back(std::move(ja));
  }
  j["atoms"] = atoms;
  j["levels"] = Json::array({Json::array({d.p_level_cap, d.q_level_cap})});
  j["seed"] = d.seed;
  j["tool_version"] = kToolVersion;
  (void)ts;
  return j;
}

Json refutation_to_json(const RefutationEvidence& ev) {
  Json j;
  j["kind"] = "refute";
  j["epsilon"] = 0.0;
  j["residual"] = 0.0;
  j["atoms"] = Json::array();
  Json levels = Json::array();
  for (const auto& kl : ev.checked_levels) levels.push_back(Json::array({kl.first, kl.second}));
  j["levels"] = levels;
  j["seed"] = ev.seed;
  j["tool_version"] = kToolVersion;
  Json f = Json::array();
  for (Eigen::Index i = 0; i < ev.functional.size(); ++i) f.push_back(ev.functional(i));
  j["functional"] = f;
  j["margin"] = ev.margin;
  j["mesh_size"] = ev.mesh_size;
  j["exact_dual_side"] = ev.exact_dual_side;
  Json eigs = Json::array();
  for (double e : ev.level_min_eigs) eigs.push_back(e);
  j["level_min_eigs"] = eigs;
  return j;
}

VerifyReport verify_certificate_json(const Json& certificate, const Json& element) {
  VerifyReport rep;
  auto [ts, x] = element_from_json(element);
  if (!certificate.contains("kind")) throw MalformedCertificateError("certificate needs kind");
  rep.kind = certificate["kind"].get<std::string>();

  if (rep.kind == "member" || rep.kind == "fail") {
    MaxDecomposition d;
    d.epsilon = certificate.at("epsilon").get<double>();
    rep.stored_residual = certificate.at("residual").get<double>();
    for (const auto& ja : certificate.at("atoms")) {
      MaxAtom a;
      const int k = ja.at("k").get<int>();
      const int l = ja.at("l").get<int>();
      a.p = zero_element(ts.left, k);
      const auto& pc = ja.at("P");
      if (static_cast<int>(pc.size()) != ts.left->dim())
        throw MalformedCertificateError("atom P coefficient count mismatch");
      for (int i = 0; i < ts.left->dim(); ++i)
        a.p.coeff[static_cast<size_t>(i)] = matrix_from_json(pc[static_cast<size_t>(i)], k, k);
      a.q = zero_element(ts.right, l);
      const auto& qc = ja.at("Q");
      if (static_cast<int>(qc.size()) != ts.right->dim())
        throw MalformedCertificateError("atom Q coefficient count mismatch");
      for (int i = 0; i < ts.right->dim(); ++i)
        a.q.coeff[static_cast<size_t>(i)] = matrix_from_json(qc[static_cast<size_t>(i)], l, l);
      a.alpha = matrix_from_json(ja.at("alpha"), x.level, k * l);
      d.atoms.push_back(std::move(a));
    }
    if (rep.kind == "fail") {
      rep.valid = true;
      rep.reason = "failure certificates carry no claim to check";
      return rep;
    }
    bool atoms_ok = true;
    rep.recomputed_residual = verify_decomposition(ts, x, d, &atoms_ok, 1e-9);
    const double gate = 1e-6 * (1 + x.realize().norm());
    if (!atoms_ok)
      rep.reason = "an atom violates cone membership or positivity";
    else if (std::abs(rep.recomputed_residual - rep.stored_residual) > 1e-10)
      rep.reason = "stored residual does not match recomputation";
    else if (rep.recomputed_residual > gate)
      rep.reason = "residual exceeds the membership gate";
    else
      rep.valid = true;
    return rep;
  }

  if (rep.kind == "refute") {
    RefutationEvidence ev;
    const auto& f = certificate.at("functional");
    ev.functional.resize(static_cast<Eigen::Index>(f.size()));
    for (size_t i = 0; i < f.size(); ++i)
      ev.functional(static_cast<Eigen::Index>(i)) = f[i].get<double>();
    for (const auto& kl : certificate.at("levels"))
      ev.checked_levels.emplace_back(kl[0].get<int>(), kl[1].get<int>());
    ev.margin = certificate.at("margin").get<double>();
    ev.mesh_size = certificate.at("mesh_size").get<int>();
    ev.seed = certificate.at("seed").get<uint64_t>();
    rep.valid = verify_refutation(ts, x, ev, 10, derive_seed(ev.seed, 0xFE5));
    if (!rep.valid) rep.reason = "functional failed fresh-mesh joint positivity or margin";
    return rep;
  }

  throw MalformedCertificateError("unknown certificate kind: " + rep.kind);
}

Json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  Json j;
  in >> j;
  return j;
}

void write_json_file(const std::string& path, const Json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << "\n";
}

}  // namespace opsys
