#include <chrono>
#include <iostream>

#include "CLI11.hpp"
#include "opsys/compacts.hpp"
#include "opsys/io.hpp"

// Command-line laboratory: every subcommand echoes its configuration and
// emits one JSON report on stdout. Exit codes: 0 computed result (negative
// answers included), 2 input error, 3 budget exhausted / undecided.

namespace {

using namespace opsys;

struct Timer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double ms() const {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
        .count();
  }
};

Json make_report(const std::string& command, const Json& config, const Json& outcome,
                 const Timer& timer) {
  Json j;
  j["command"] = command;
  j["config"] = config;
  j["outcome"] = outcome;
  j["tool_version"] = kToolVersion;
  j["wall_time_ms"] = timer.ms();
  return j;
}

std::vector<std::pair<int, int>> parse_levels(const std::string& text) {
  std::vector<std::pair<int, int>> levels;
  std::string cur;
  auto flush = [&] {
    if (cur.empty()) return;
    const auto comma = cur.find(',');
    if (comma == std::string::npos) throw CLI::ValidationError("levels must be k,l pairs");
    levels.emplace_back(std::stoi(cur.substr(0, comma)), std::stoi(cur.substr(comma + 1)));
    cur.clear();
  };
  for (char c : text) {
    if (c == ';')
      flush();
    else if (!isspace(c))
      cur.push_back(c);
  }
  flush();
  return levels;
}

std::vector<double> parse_schedule(const std::string& text) {
  std::vector<double> eps;
  std::string cur;
  for (char c : text) {
    if (c == ',') {
      if (!cur.empty()) eps.push_back(std::stod(cur));
      cur.clear();
    } else if (!isspace(c)) {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) eps.push_back(std::stod(cur));
  return eps;
}

struct ElementArgs {
  std::string system_path, partner_path, element_path;
};

std::pair<TensorSystem, LevelElement> load_element(const ElementArgs& args) {
  Json ej = load_json_file(args.element_path);
  if (ej.contains("factors")) return element_from_json(ej);
  if (args.system_path.empty() || args.partner_path.empty())
    throw MalformedCertificateError(
        "element file has no factors; pass --system and --partner");
  TensorSystem ts = make_tensor_system(system_from_json(load_json_file(args.system_path)),
                                       system_from_json(load_json_file(args.partner_path)));
  const int level = ej.at("level").get<int>();
  LevelElement x = zero_element(ts.product, level);
  const auto& coeffs = ej.at("coeffs");
  if (static_cast<int>(coeffs.size()) != ts.product->dim())
    throw MalformedCertificateError("element coefficient count mismatch with factors");
  for (int a = 0; a < ts.product->dim(); ++a)
    x.coeff[static_cast<size_t>(a)] = matrix_from_json(coeffs[static_cast<size_t>(a)], level, level);
  return {std::move(ts), std::move(x)};
}

const char* verdict_name(NuclearityVerdict v) {
  switch (v) {
    case NuclearityVerdict::ConsistentWithNuclear: return "ConsistentWithNuclear";
    case NuclearityVerdict::EvidenceAgainst: return "EvidenceAgainst";
    default: return "Inconclusive";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"desk-scale laboratory for operator system tensor cones"};
  app.require_subcommand(1);

  uint64_t seed = 0;
  double tol = 1e-8;
  double eps = 1e-3;
  long budget = 50000;
  int truncation = 16;
  int nmax = 2;
  int mesh = 24;
  std::string levels_text = "2,2;3,3";
  std::string map_path, cert_path, out_path, schedule_text = "1e-1,1e-2,1e-3";
  std::string subsystem_path;
  std::vector<std::string> partner_paths;
  ElementArgs elem;

  app.add_option("--seed", seed, "RNG seed")->capture_default_str();

  auto* check_cp = app.add_subcommand("check-cp", "decide complete positivity of a map");
  check_cp->add_option("--map", map_path, "map file")->required();
  check_cp->add_option("--tol", tol)->capture_default_str();
  check_cp->add_option("--budget", budget)->capture_default_str();

  auto* min_member_cmd = app.add_subcommand("min-member", "exact minimal-cone membership");
  min_member_cmd->add_option("--system", elem.system_path);
  min_member_cmd->add_option("--partner", elem.partner_path);
  min_member_cmd->add_option("--element", elem.element_path)->required();
  min_member_cmd->add_option("--tol", tol)->capture_default_str();

  auto* certify = app.add_subcommand("max-certify", "atomic maximal-cone certification");
  certify->add_option("--system", elem.system_path);
  certify->add_option("--partner", elem.partner_path);
  certify->add_option("--element", elem.element_path)->required();
  certify->add_option("--eps", eps, "Archimedean shift")->capture_default_str();
  certify->add_option("--budget", budget)->capture_default_str();
  certify->add_option("--out", out_path, "certificate output file");

  auto* refute = app.add_subcommand("max-refute", "separating-functional evidence search");
  refute->add_option("--system", elem.system_path);
  refute->add_option("--partner", elem.partner_path);
  refute->add_option("--element", elem.element_path)->required();
  refute->add_option("--levels", levels_text)->capture_default_str();
  refute->add_option("--mesh", mesh)->capture_default_str();
  refute->add_option("--out", out_path, "evidence output file");

  auto* nuclearity = app.add_subcommand("nuclearity", "min = max survey against partners");
  nuclearity->add_option("--system", elem.system_path)->required();
  nuclearity->add_option("--partner", partner_paths, "partner system files")->required();
  nuclearity->add_option("--nmax", nmax)->capture_default_str();
  nuclearity->add_option("--budget", budget)->capture_default_str();

  auto* factorize_cmd = app.add_subcommand("factorize", "UCP factorization through matrices");
  factorize_cmd->add_option("--map", map_path, "UCP map file")->required();
  factorize_cmd->add_option("--schedule", schedule_text, "epsilon list")->capture_default_str();
  factorize_cmd->add_option("--subsystem", subsystem_path, "restrict to this subsystem");
  factorize_cmd->add_option("--budget", budget)->capture_default_str();

  auto* s0_demo = app.add_subcommand("s0-demo", "truncated unitized-compacts laboratory");
  s0_demo->add_option("--N", truncation, "truncation of the compact block")
      ->capture_default_str();

  auto* verify = app.add_subcommand("verify-certificate", "re-check a certificate from scratch");
  verify->add_option("--certificate", cert_path)->required();
  verify->add_option("--element", elem.element_path)->required();

  CLI11_PARSE(app, argc, argv);
  Timer timer;

  try {
    if (app.got_subcommand(check_cp)) {
      SystemMap m = map_from_json(load_json_file(map_path));
      CpCertificate cert = is_cp_subsystem(m, tol, static_cast<int>(budget), seed);
      Json config{{"map", map_path}, {"tol", tol}, {"budget", budget}, {"seed", seed}};
      Json outcome;
      switch (cert.kind) {
        case CpCertificate::Kind::ExactMember: outcome["certificate"] = "ExactMember"; break;
        case CpCertificate::Kind::CertifiedMember:
          outcome["certificate"] = "CertifiedMember";
          break;
        case CpCertificate::Kind::RefutedAtLevel:
          outcome["certificate"] = "RefutedAtLevel";
          outcome["witness_level"] = cert.witness_level;
          outcome["witness_min_eig"] = cert.witness_min_eig;
          break;
        default: outcome["certificate"] = "Undecided"; break;
      }
      outcome["cp"] = cert.certified();
      outcome["choi_min_eig"] = cert.choi_min_eig;
      outcome["agreement_residual"] = cert.agreement_residual;
      outcome["levels_scanned"] = cert.levels_scanned;
      std::cout << make_report("check-cp", config, outcome, timer).dump(2) << "\n";
      return cert.kind == CpCertificate::Kind::Undecided ? 3 : 0;
    }

    if (app.got_subcommand(min_member_cmd)) {
      auto [ts, x] = load_element(elem);
      const bool member = min_member(ts, x, tol);
      Json config{{"element", elem.element_path}, {"tol", tol}, {"seed", seed}};
      Json outcome{{"member", member}, {"min_eig", min_eig(x.realize())}};
      std::cout << make_report("min-member", config, outcome, timer).dump(2) << "\n";
      return 0;
    }

    if (app.got_subcommand(certify)) {
      auto [ts, x] = load_element(elem);
      CertifyResult r = max_certify(ts, x, eps, budget, seed);
      Json config{{"element", elem.element_path}, {"eps", eps}, {"budget", budget},
                  {"seed", seed}};
      Json outcome{{"success", r.success},
                   {"residual", r.residual},
                   {"atoms", r.decomposition.atoms.size()},
                   {"iterations", r.iterations_used},
                   {"note", r.note}};
      Json cert = certificate_to_json(ts, r.decomposition, r.success);
      if (!out_path.empty()) write_json_file(out_path, cert);
      std::cout << make_report("max-certify", config, outcome, timer).dump(2) << "\n";
      return r.success ? 0 : 3;
    }

    if (app.got_subcommand(refute)) {
      auto [ts, x] = load_element(elem);
      const auto levels = parse_levels(levels_text);
      RefuteResult r = max_refute(ts, x, levels, mesh, seed);
      Json config{{"element", elem.element_path}, {"levels", levels_text},
                  {"mesh", mesh}, {"seed", seed}};
      Json outcome;
      outcome["found"] = r.found;
      if (r.found) {
        outcome["margin"] = r.evidence.margin;
        outcome["exact_dual_side"] = r.evidence.exact_dual_side;
        outcome["note"] = "evidence at the listed levels, not a proof";
        if (!out_path.empty()) write_json_file(out_path, refutation_to_json(r.evidence));
      }
      std::cout << make_report("max-refute", config, outcome, timer).dump(2) << "\n";
      return r.found ? 0 : 3;
    }

    if (app.got_subcommand(nuclearity)) {
      SystemPtr s = system_from_json(load_json_file(elem.system_path));
      std::vector<SystemPtr> partners;
      for (const auto& p : partner_paths) partners.push_back(system_from_json(load_json_file(p)));
      NuclearityReport rep = nuclearity_report(s, partners, nmax, budget, seed);
      Json config{{"system", elem.system_path}, {"nmax", nmax}, {"budget", budget},
                  {"seed", seed}};
      Json outcome;
      outcome["aggregate"] = verdict_name(rep.aggregate);
      Json parts = Json::array();
      for (const auto& pr : rep.partners) {
        Json pj;
        pj["verdict"] = verdict_name(pr.verdict);
        pj["exact_route"] = pr.exact_route;
        pj["note"] = pr.note;
        Json outs = Json::array();
        for (const auto& o : pr.outcomes)
          outs.push_back(Json{{"level", o.level},
                              {"eps", o.eps},
                              {"certified", o.certified},
                              {"residual", o.residual}});
        pj["outcomes"] = outs;
        parts.push_back(std::move(pj));
      }
      outcome["partners"] = parts;
      std::cout << make_report("nuclearity", config, outcome, timer).dump(2) << "\n";
      return rep.aggregate == NuclearityVerdict::Inconclusive ? 3 : 0;
    }

    if (app.got_subcommand(factorize_cmd)) {
      SystemMap m = map_from_json(load_json_file(map_path));
      SystemPtr e = subsystem_path.empty() ? m.domain
                                           : system_from_json(load_json_file(subsystem_path));
      std::vector<std::pair<SystemPtr, double>> schedule;
      for (double ev : parse_schedule(schedule_text)) schedule.emplace_back(e, ev);
      auto steps = extract_factorization(m, schedule, budget, seed);
      ConvergenceAudit audit = convergence_audit(steps);
      Json config{{"map", map_path}, {"schedule", schedule_text}, {"budget", budget},
                  {"seed", seed}};
      Json outcome;
      Json stepsj = Json::array();
      for (const auto& st : steps)
        stepsj.push_back(Json{{"E_dim", st.e->dim()},
                              {"epsilon", st.eps},
                              {"r", st.r},
                              {"max_error", st.max_error},
                              {"phi_ucp", st.phi_ucp},
                              {"psi_ucp", st.psi_ucp},
                              {"phi", map_to_json(st.phi)},
                              {"psi", map_to_json(st.psi)}});
      outcome["steps"] = stepsj;
      outcome["bounds_hold"] = audit.bounds_hold;
      outcome["monotone_in_eps"] = audit.monotone_in_eps;
      std::cout << make_report("factorize", config, outcome, timer).dump(2) << "\n";
      return 0;
    }

    if (app.got_subcommand(s0_demo)) {
      const int n_trunc = truncation;
      TruncatedS0 s0 = build_s0(n_trunc);
      Json config{{"N", n_trunc}, {"seed", seed}};
      Json outcome;

      // convergence of psi_n phi_n on a corner-supported compact with zero
      // (1,1) entry, against the E_11 direction where it must fail
      const int d = n_trunc + 1;
      Matrix comp = Matrix::Zero(d, d);
      for (int i = 0; i < n_trunc; ++i)
        for (int j = 0; j < n_trunc; ++j)
          if (i || j) comp(i, j) = 1.0 / ((i + 1.0 + j + 1.0) * (i + 1.0 + j + 1.0));
      comp = hermitian_part(comp);
      LevelElement x = scalar_element(s0.system, comp);
      std::vector<int> ns;
      for (int n = 1; n <= n_trunc; ++n) ns.push_back(n);
      Json curve = Json::array();
      const auto errs = convergence_errors(x, ns);
      for (size_t i = 0; i < ns.size(); ++i)
        curve.push_back(Json{{"n", ns[static_cast<size_t>(i)]}, {"error", errs[i]}});
      outcome["convergence"] = curve;

      Matrix e00 = Matrix::Zero(d, d);
      e00(0, 0) = 1;
      LevelElement xe = scalar_element(build_s(n_trunc), e00);
      Json e11curve = Json::array();
      const auto errs_e = convergence_errors(xe, ns);
      for (size_t i = 0; i < ns.size(); ++i)
        e11curve.push_back(Json{{"n", ns[static_cast<size_t>(i)]}, {"error", errs_e[i]}});
      outcome["e11_curve"] = e11curve;

      const int audit_n = std::min(n_trunc, 6);
      BidualAudit audit = bidual_equivalence_audit(audit_n, 200, seed);
      outcome["bidual_audit"] = Json{{"N", audit_n},
                                     {"samples", audit.rows.size()},
                                     {"disagreements", audit.disagreements},
                                     {"consistent", audit.consistent}};

      Json obstructions = Json::array();
      for (const auto& w : algebra_obstruction(*s0.system))
        obstructions.push_back(Json{{"gen_a", w.gen_a}, {"gen_b", w.gen_b},
                                    {"residual", w.residual}});
      outcome["obstruction_witnesses"] = obstructions;

      std::cout << make_report("s0-demo", config, outcome, timer).dump(2) << "\n";
      return 0;
    }

    if (app.got_subcommand(verify)) {
      Json cert = load_json_file(cert_path);
      Json element = load_json_file(elem.element_path);
      VerifyReport rep = verify_certificate_json(cert, element);
      Json config{{"certificate", cert_path}, {"element", elem.element_path}};
      Json outcome{{"valid", rep.valid},
                   {"kind", rep.kind},
                   {"stored_residual", rep.stored_residual},
                   {"recomputed_residual", rep.recomputed_residual},
                   {"reason", rep.reason}};
      std::cout << make_report("verify-certificate", config, outcome, timer).dump(2) << "\n";
      return 0;
    }
  } catch (const MalformedCertificateError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
