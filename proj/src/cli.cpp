#include "tubempc/cli.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "tubempc/config.hpp"

namespace tubempc {

namespace {

Vector parse_x0(const std::string& s) {
  std::vector<double> vals;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      vals.push_back(std::stod(tok));
    } catch (const std::exception&) {
      throw ConfigError("--x0: cannot parse '" + tok + "' as a number");
    }
  }
  Vector out(static_cast<int>(vals.size()));
  for (size_t i = 0; i < vals.size(); ++i) out[static_cast<int>(i)] = vals[i];
  return out;
}

Json load_artifact_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open artifact '" + path + "'");
  Json art;
  try {
    in >> art;
  } catch (const std::exception& e) {
    throw ConfigError("artifact parse error in '" + path + "': " + e.what());
  }
  return art;
}

int cmd_design(const std::string& config_src, const std::string& out_path, std::ostream& out) {
  Json cfg = resolve_config(config_src);
  DesignOutput d = run_design(cfg);
  std::ofstream f(out_path);
  if (!f) throw ConfigError("cannot write artifact '" + out_path + "'");
  f << d.artifact.dump(2) << "\n";
  out << "design: wrote " << out_path << "\n";
  for (const auto& [k, v] : d.scalars) out << "  " << k << " = " << v << "\n";
  return 0;
}

int cmd_solve(const std::string& artifact_path, const std::string& x0_str,
              const std::string& out_path, std::ostream& out) {
  DesignOutput d = design_from_artifact(load_artifact_file(artifact_path));
  OcpSpec spec;
  spec.design = &d.design;
  Vector x0_raw = x0_str.empty() ? (d.scenario.x0 + d.design.cost.x_ref) : parse_x0(x0_str);
  if (x0_raw.size() != d.design.model.n)
    throw ConfigError("--x0: expected " + std::to_string(d.design.model.n) + " values");
  spec.x0 = x0_raw - d.design.cost.x_ref;
  OcpSolution sol = solve(spec);

  Json rep;
  rep["status"] = to_string(sol.status.outcome);
  rep["iterations"] = sol.status.iterations;
  rep["value"] = sol.value;
  Json xs = Json::array(), us = Json::array(), ss = Json::array(), ws = Json::array();
  for (int k = 0; k <= d.design.N; ++k) {
    Json row = Json::array();
    for (int i = 0; i < d.design.model.n; ++i) row.push_back(sol.x(k, i) + d.design.cost.x_ref[i]);
    xs.push_back(row);
    ss.push_back(sol.s[k]);
  }
  for (int k = 0; k < d.design.N; ++k) {
    Json row = Json::array();
    for (int i = 0; i < d.design.model.m; ++i) row.push_back(sol.u(k, i) + d.design.cost.u_ref[i]);
    us.push_back(row);
    ws.push_back(sol.w[k]);
  }
  rep["x"] = xs;
  rep["u"] = us;
  rep["s"] = ss;
  rep["w"] = ws;
  if (!out_path.empty()) {
    std::ofstream f(out_path);
    f << rep.dump(2) << "\n";
  }
  out << rep.dump(2) << "\n";
  return sol.status.optimal() ? 0 : 1;
}

int cmd_simulate(const std::string& artifact_path, int steps, const std::string& policy,
                 uint64_t seed, const std::string& x0_str, const std::string& out_path,
                 std::ostream& out) {
  DesignOutput d = design_from_artifact(load_artifact_file(artifact_path));
  ScenarioConfig cfg = d.scenario;
  if (steps >= 0) cfg.steps = steps;
  if (!policy.empty()) cfg.policy = policy_from_string(policy);
  cfg.seed = seed;
  if (!x0_str.empty()) {
    Vector x0_raw = parse_x0(x0_str);
    if (x0_raw.size() != d.design.model.n)
      throw ConfigError("--x0: expected " + std::to_string(d.design.model.n) + " values");
    cfg.x0 = x0_raw - d.design.cost.x_ref;
  }

  ClosedLoopTrace trace = run_scenario(d.design, d.uncertainty, cfg);
  if (!out_path.empty()) {
    std::ofstream f(out_path);
    if (!f) throw ConfigError("cannot write trace '" + out_path + "'");
    write_trace_csv(trace, d.design, f);
  }

  Json summary;
  summary["steps"] = static_cast<int>(trace.steps.size());
  summary["violations"] = trace.violations;
  summary["fallbacks"] = trace.fallbacks;
  summary["worst_margin"] = trace.steps.empty() ? 0.0 : trace.worst_margin;
  summary["worst_tube_membership"] =
      trace.steps.empty() ? 0.0 : trace.worst_tube_membership;
  summary["initial_status"] = to_string(trace.initial_solution.status.outcome);
  out << summary.dump(2) << "\n";
  return trace.violations == 0 ? 0 : 1;
}

struct SuiteResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

int cmd_verify(const std::string& artifact_path, const std::string& suite, uint64_t seed,
               std::ostream& out) {
  DesignOutput d = design_from_artifact(load_artifact_file(artifact_path));
  const Design& dd = d.design;
  std::vector<SuiteResult> results;
  std::vector<std::string> notes;
  auto want = [&suite](const std::string& s) { return suite.empty() || suite == s; };

  if (want("certificate")) {
    SuiteResult r;
    r.name = "certificate_contraction";
    CertificateReport rep = validate_certificate(dd.cert, dd.model, dd.constraints, 500, seed);
    std::ostringstream os;
    os << "samples=" << rep.samples << " worst_ratio=" << rep.worst_ratio
       << " rho=" << dd.cert.rho;
    r.detail = os.str();
    r.pass = !rep.violated;
    results.push_back(r);
  }

  if (want("tube_bound") && dd.ct_tube) {
    notes.push_back(
        "note: tube_bound/candidate suites skipped, the bound uses certified "
        "continuous-time constants the bundled certificate does not itself certify");
  }
  if (want("tube_bound") && !dd.ct_tube) {
    SuiteResult r;
    r.name = "tube_bound_monotonicity";
    MonotonicityReport rep = check_monotonicity(dd.tube, dd.cert, dd.constraints, dd.model.n,
                                                dd.model.m, 2000, seed);
    r.pass = !rep.violated;
    r.detail = "worst_violation=" + std::to_string(rep.worst_violation);
    results.push_back(r);

    SuiteResult r2;
    r2.name = "tube_bound_soundness";
    SoundnessReport rep2 =
        check_soundness(dd.tube, dd.cert, d.uncertainty, dd.model, dd.constraints, 2000, seed);
    r2.pass = !rep2.violated;
    r2.detail = "worst_violation=" + std::to_string(rep2.worst_violation);
    results.push_back(r2);
  }

  if (want("terminal")) {
    SuiteResult r;
    r.name = "terminal_conditions";
    TerminalCheckReport rep = check_terminal_conditions(
        dd.terminal, dd.model, dd.cert, dd.cost, dd.constraints, dd.gains, dd.tube, dd.N, 500,
        seed);
    r.pass = rep.ok();
    std::ostringstream os;
    os << "decrease=" << rep.worst_decrease << " invariance=" << rep.worst_invariance
       << " tightening=" << rep.worst_tightening;
    r.detail = os.str();
    results.push_back(r);
  }

  if (want("candidate") && !dd.ct_tube) {
    SuiteResult r;
    r.name = "candidate_shift";
    try {
      ScenarioConfig sc = d.scenario;
      sc.steps = std::min(sc.steps, 10);
      sc.seed = seed;
      ClosedLoopTrace trace = run_scenario(dd, d.uncertainty, sc);
      double worst = 0.0;
      for (const auto& rec : trace.steps) worst = std::max(worst, rec.candidate_residual);
      r.pass = worst <= 1e-7;
      r.detail = "worst_candidate_residual=" + std::to_string(worst);
    } catch (const Error& e) {
      r.pass = false;
      r.detail = e.what();
    }
    results.push_back(r);
  }

  if (want("closed_loop")) {
    SuiteResult r;
    r.name = "closed_loop";
    try {
      ScenarioConfig sc = d.scenario;
      sc.steps = std::min(sc.steps, 20);
      sc.seed = seed;
      ClosedLoopTrace trace = run_scenario(dd, d.uncertainty, sc);
      r.pass = trace.violations == 0;
      std::ostringstream os;
      os << "violations=" << trace.violations << " fallbacks=" << trace.fallbacks
         << " worst_margin=" << (trace.steps.empty() ? 0.0 : trace.worst_margin);
      r.detail = os.str();
    } catch (const Error& e) {
      r.pass = false;
      r.detail = e.what();
    }
    results.push_back(r);
  }

  // Chain-consistency note for recorded continuous-time constants: the
  // discrete cap must satisfy s_bar_f = (1-rho^N)/(1-rho) w_bar.
  if (d.scalars.count("w_bar") && d.scalars.count("s_bar_f") && d.scalars.count("rho")) {
    const double rho = d.scalars.at("rho");
    const double w = d.scalars.at("w_bar");
    const double chain = (1.0 - std::pow(rho, dd.N)) / (1.0 - rho) * w;
    std::ostringstream os;
    os << "note: w_bar = " << w << " is chain-consistent with s_bar_f = " << chain
       << " (a 10x larger w_bar would not be)";
    notes.push_back(os.str());
  }

  bool all_pass = true;
  out << std::left;
  for (const auto& r : results) {
    all_pass = all_pass && r.pass;
    out << (r.pass ? "[PASS] " : "[FAIL] ") << std::setw(28) << r.name << " " << r.detail
        << "\n";
  }
  for (const auto& n : notes) out << n << "\n";
  return all_pass ? 0 : 1;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"tube-based robust MPC toolkit"};
  app.require_subcommand(1);

  std::string config_src, artifact_path, out_path, x0_str, policy, suite;
  int steps = -1;
  uint64_t seed = 1;

  auto* design = app.add_subcommand("design", "run the offline design pipeline");
  design->add_option("-c,--config", config_src, "config file or preset name")->required();
  design->add_option("-o,--output", out_path, "artifact output path")->required();

  auto* solve_cmd = app.add_subcommand("solve", "solve one optimal control problem");
  solve_cmd->add_option("-a,--artifact", artifact_path, "design artifact")->required();
  solve_cmd->add_option("--x0", x0_str, "initial state, comma separated (plant coordinates)");
  solve_cmd->add_option("-o,--output", out_path, "solution output path (JSON)");

  auto* sim = app.add_subcommand("simulate", "run a closed-loop scenario");
  sim->add_option("-a,--artifact", artifact_path, "design artifact")->required();
  sim->add_option("--steps", steps, "number of closed-loop steps");
  sim->add_option("--policy", policy, "none|uniform_random|vertex_random|adversarial_vdelta");
  sim->add_option("--seed", seed, "disturbance seed");
  sim->add_option("--x0", x0_str, "initial state override (plant coordinates)");
  sim->add_option("-o,--output", out_path, "trace CSV path");

  auto* verify = app.add_subcommand("verify", "run the invariant suites against an artifact");
  verify->add_option("-a,--artifact", artifact_path, "design artifact")->required();
  verify->add_option("--suite", suite,
                     "certificate|tube_bound|terminal|candidate|closed_loop (default: all)");
  verify->add_option("--seed", seed, "sampling seed");

  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  try {
    app.parse(argv_rev);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {  // --help
      out << app.help();
      return 0;
    }
    err << "usage error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (app.got_subcommand(design)) return cmd_design(config_src, out_path, out);
    if (app.got_subcommand(solve_cmd)) return cmd_solve(artifact_path, x0_str, out_path, out);
    if (app.got_subcommand(sim))
      return cmd_simulate(artifact_path, steps, policy, seed, x0_str, out_path, out);
    if (app.got_subcommand(verify)) return cmd_verify(artifact_path, suite, seed, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DimensionError& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DesignError& e) {
    err << "design infeasible: " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  err << "usage error: no subcommand\n";
  return 2;
}

}  // namespace tubempc
