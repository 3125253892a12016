#include "tubempc/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace tubempc {

namespace {

double num_or_inf(const Json& v, const std::string& field) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "inf") return kInf;
    if (s == "-inf") return -kInf;
  }
  throw ConfigError("field '" + field + "': expected a number or \"inf\"");
}

Vector parse_vector(const Json& v, const std::string& field) {
  if (!v.is_array()) throw ConfigError("field '" + field + "': expected an array");
  Vector out(v.size());
  for (size_t i = 0; i < v.size(); ++i) out[static_cast<int>(i)] = num_or_inf(v[i], field);
  return out;
}

Matrix parse_matrix(const Json& v, const std::string& field) {
  if (!v.is_array() || v.empty() || !v[0].is_array())
    throw ConfigError("field '" + field + "': expected a nested array");
  const size_t rows = v.size(), cols = v[0].size();
  Matrix out(rows, cols);
  for (size_t i = 0; i < rows; ++i) {
    if (v[i].size() != cols) throw ConfigError("field '" + field + "': ragged rows");
    for (size_t j = 0; j < cols; ++j)
      out(static_cast<int>(i), static_cast<int>(j)) = v[i][j].get<double>();
  }
  return out;
}

Json dump_vector(const Vector& v) {
  Json out = Json::array();
  for (int i = 0; i < v.size(); ++i) {
    if (std::isinf(v[i]))
      out.push_back(v[i] > 0 ? "inf" : "-inf");
    else
      out.push_back(v[i]);
  }
  return out;
}

Json dump_matrix(const Matrix& M) {
  Json out = Json::array();
  for (int i = 0; i < M.rows(); ++i) {
    Json row = Json::array();
    for (int j = 0; j < M.cols(); ++j) row.push_back(M(i, j));
    out.push_back(row);
  }
  return out;
}

Json dump_scalar_or_inf(double v) {
  if (std::isinf(v)) return Json(v > 0 ? "inf" : "-inf");
  return Json(v);
}

const Json& section(const Json& cfg, const std::string& name) {
  if (!cfg.contains(name)) throw ConfigError("missing config section [" + name + "]");
  return cfg.at(name);
}

// Raw-coordinate box bounds become normalized rows about the reference.
void append_box_rows(ConstraintSet& cs, const Json& box, int n, int m, const Vector& x_ref,
                     const Vector& u_ref) {
  auto add_rows = [&cs](const Vector& ref, const Json& lo_j, const Json& hi_j, int dim,
                        int other_dim, bool is_state) {
    Vector lo = lo_j.is_null() ? Vector::Constant(dim, -kInf) : parse_vector(lo_j, "box");
    Vector hi = hi_j.is_null() ? Vector::Constant(dim, kInf) : parse_vector(hi_j, "box");
    require_dims(lo.size() == dim && hi.size() == dim, "constraints: box bound size");
    for (int j = 0; j < dim; ++j) {
      if (std::isfinite(hi[j])) {
        const double margin = hi[j] - ref[j];
        require(margin > 0.0, "constraints: reference outside box (upper)");
        AffineConstraint a;
        a.Lx = Vector::Zero(is_state ? dim : other_dim);
        a.Lu = Vector::Zero(is_state ? other_dim : dim);
        (is_state ? a.Lx : a.Lu)[j] = 1.0 / margin;
        cs.items.emplace_back(std::move(a));
      }
      if (std::isfinite(lo[j])) {
        const double margin = ref[j] - lo[j];
        require(margin > 0.0, "constraints: reference outside box (lower)");
        AffineConstraint a;
        a.Lx = Vector::Zero(is_state ? dim : other_dim);
        a.Lu = Vector::Zero(is_state ? other_dim : dim);
        (is_state ? a.Lx : a.Lu)[j] = -1.0 / margin;
        cs.items.emplace_back(std::move(a));
      }
    }
  };
  add_rows(x_ref, box.contains("x_lo") ? box.at("x_lo") : Json(),
           box.contains("x_hi") ? box.at("x_hi") : Json(), n, m, true);
  add_rows(u_ref, box.contains("u_lo") ? box.at("u_lo") : Json(),
           box.contains("u_hi") ? box.at("u_hi") : Json(), m, n, false);
}

HoelderConstraint named_hoelder(const Json& h, int n, int m) {
  const std::string name = h.at("name").get<std::string>();
  HoelderConstraint hc;
  hc.c_tilde = h.at("c_tilde").get<double>();
  hc.lambda = h.at("lambda").get<double>();
  if (name == "state_norm_sq") {
    const double bound = h.value("bound", 1.0);
    hc.g = [bound](const Vector& x, const Vector&) { return x.squaredNorm() - bound; };
    hc.grad = [n, m](const Vector& x, const Vector&) {
      Vector g = Vector::Zero(n + m);
      g.head(n) = 2.0 * x;
      return g;
    };
    return hc;
  }
  throw ConfigError("unknown hoelder constraint form '" + name + "'");
}

}  // namespace

LoadedProblem load_problem(const Json& cfg) {
  LoadedProblem lp;

  // [cost] first: the reference defines the deviation coordinates.
  const Json& cost_j = section(cfg, "cost");
  lp.cost.Q = parse_matrix(cost_j.at("Q"), "cost.Q");
  lp.cost.R = parse_matrix(cost_j.at("R"), "cost.R");
  const int n_hint = static_cast<int>(lp.cost.Q.rows());
  const int m_hint = static_cast<int>(lp.cost.R.rows());
  lp.cost.x_ref = cost_j.contains("x_ref") ? parse_vector(cost_j.at("x_ref"), "cost.x_ref")
                                           : Vector::Zero(n_hint);
  lp.cost.u_ref = cost_j.contains("u_ref") ? parse_vector(cost_j.at("u_ref"), "cost.u_ref")
                                           : Vector::Zero(m_hint);
  lp.cost.validate();

  // [model]
  const Json& model_j = section(cfg, "model");
  const std::string kind = model_j.value("kind", "lti");
  if (kind == "lti") {
    lp.model = NominalModel::lti(parse_matrix(model_j.at("A"), "model.A"),
                                 parse_matrix(model_j.at("B"), "model.B"));
  } else if (kind == "registry") {
    lp.model = registry_model(model_j.at("name").get<std::string>(), model_j.value("h", 0.0),
                              lp.cost.x_ref, lp.cost.u_ref);
  } else {
    throw ConfigError("model.kind must be 'lti' or 'registry'");
  }
  const int n = lp.model.n, m = lp.model.m;
  require_dims(lp.cost.Q.rows() == n && lp.cost.R.rows() == m, "cost: Q/R size mismatch");
  require_dims(lp.cost.x_ref.size() == n && lp.cost.u_ref.size() == m,
               "cost: reference size mismatch");

  // [constraints]
  const Json& con_j = section(cfg, "constraints");
  if (con_j.contains("box")) append_box_rows(lp.constraints, con_j.at("box"), n, m,
                                             lp.cost.x_ref, lp.cost.u_ref);
  if (con_j.contains("affine")) {
    for (const auto& row : con_j.at("affine")) {
      AffineConstraint a;
      a.Lx = parse_vector(row.at("Lx"), "constraints.affine.Lx");
      a.Lu = parse_vector(row.at("Lu"), "constraints.affine.Lu");
      require_dims(a.Lx.size() == n && a.Lu.size() == m, "constraints: affine row size");
      lp.constraints.items.emplace_back(std::move(a));
    }
  }
  if (con_j.contains("hoelder"))
    for (const auto& h : con_j.at("hoelder"))
      lp.constraints.items.emplace_back(named_hoelder(h, n, m));
  lp.constraints.validate();
  require(lp.constraints.size() > 0, "constraints: at least one constraint required");
  if (con_j.contains("gains")) {
    std::vector<double> g;
    for (const auto& v : con_j.at("gains")) g.push_back(v.get<double>());
    require(g.size() == lp.constraints.tightened_indices().size(),
            "constraints: pinned gains count mismatch");
    lp.pinned_gains = g;
  }

  // [certificate]
  const Json& cert_j = section(cfg, "certificate");
  const std::string shape = cert_j.at("shape").get<std::string>();
  StabilizabilityCertificate& c = lp.cert;
  if (shape == "quadratic") {
    c.shape = VdeltaShape::Quadratic;
    c.P = parse_matrix(cert_j.at("P"), "certificate.P");
  } else if (shape == "polytopic") {
    c.shape = VdeltaShape::Polytopic;
    c.rows = parse_matrix(cert_j.at("rows"), "certificate.rows");
  } else {
    throw ConfigError("certificate.shape must be 'quadratic' or 'polytopic'");
  }
  c.K = cert_j.contains("K") ? parse_matrix(cert_j.at("K"), "certificate.K") : Matrix::Zero(m, n);
  require_dims(c.K.rows() == m && c.K.cols() == n, "certificate: K size");
  c.c_delta_l = cert_j.at("c_delta_l").get<double>();
  c.c_delta_u = cert_j.at("c_delta_u").get<double>();
  c.delta_loc = num_or_inf(cert_j.at("delta_loc"), "certificate.delta_loc");
  c.kappa_max = cert_j.at("kappa_max").get<double>();
  if (cert_j.contains("rho_c")) {
    lp.rho_c = cert_j.at("rho_c").get<double>();
    CtCertificate ct{c, *lp.rho_c};
    require(lp.model.kind == ModelKind::ContinuousRhs || cert_j.contains("h"),
            "certificate: rho_c needs a sampling time");
    const double h = lp.model.kind == ModelKind::ContinuousRhs ? lp.model.h
                                                               : cert_j.at("h").get<double>();
    lp.cert = ct_to_dt(ct, h);
  } else if (cert_j.contains("rho")) {
    c.rho = cert_j.at("rho").get<double>();
  } else {
    // Polytopic LTI certificates admit a direct LP computation of rho.
    require(c.shape == VdeltaShape::Polytopic && lp.model.linear,
            "certificate: rho (or rho_c) is required");
    bool not_contractive = false;
    c.rho = contraction_rate_polytopic(lp.model.A + lp.model.B * c.K, c.rows, &not_contractive);
    if (not_contractive)
      throw DesignError("certificate: computed contraction rate " + std::to_string(c.rho) +
                        " is not < 1");
  }
  lp.cert.validate();

  // [uncertainty]
  const Json& unc_j = section(cfg, "uncertainty");
  const std::string variant = unc_j.at("variant").get<std::string>();
  if (variant == "additive_ball") {
    AdditiveBall ball;
    ball.E = parse_matrix(unc_j.at("E"), "uncertainty.E");
    ball.radius = unc_j.at("radius").get<double>();
    lp.uncertainty = ball;
  } else if (variant == "lpv") {
    LpvUncertainty u;
    for (const auto& Ai : unc_j.at("A")) u.A.push_back(parse_matrix(Ai, "uncertainty.A[i]"));
    for (const auto& Bi : unc_j.at("B")) u.B.push_back(parse_matrix(Bi, "uncertainty.B[i]"));
    for (const auto& th : unc_j.at("theta_vertices"))
      u.theta_vertices.push_back(parse_vector(th, "uncertainty.theta_vertices"));
    if (unc_j.contains("E")) {
      u.E = parse_matrix(unc_j.at("E"), "uncertainty.E");
      for (const auto& d : unc_j.at("d_vertices"))
        u.d_vertices.push_back(parse_vector(d, "uncertainty.d_vertices"));
    }
    // The matrices act on plant coordinates; deviations shift by the reference.
    u.x_ref = lp.cost.x_ref;
    u.u_ref = lp.cost.u_ref;
    lp.uncertainty = u;
  } else if (variant == "custom") {
    const double a = unc_j.at("a").get<double>();
    const double b = unc_j.at("b").get<double>();
    CustomBound cb;
    cb.w_hat = [a, b](const Vector& x, const Vector&) { return a + b * x.norm(); };
    cb.L = unc_j.value("L", b);
    lp.uncertainty = cb;
  } else {
    throw ConfigError("uncertainty.variant must be additive_ball, lpv, or custom");
  }
  validate_uncertainty(lp.uncertainty, n, m);
  lp.lpv_simplified = unc_j.value("simplified", false);
  if (unc_j.contains("w_bar_c")) lp.w_bar_c = unc_j.at("w_bar_c").get<double>();

  // [terminal]
  const Json& term_j = section(cfg, "terminal");
  lp.terminal_design = term_j.at("design").get<std::string>();
  lp.N = term_j.at("N").get<int>();
  require(lp.N >= 1, "terminal: N must be >= 1");
  lp.level_scale = term_j.value("level_scale", 1.0);
  if (term_j.contains("L_w")) lp.pinned_L_w = term_j.at("L_w").get<double>();
  if (term_j.contains("c_max")) lp.pinned_c_max = term_j.at("c_max").get<double>();
  const std::string mode = term_j.value("mode", lp.terminal_design == "additive"
                                                    ? "additive_offline"
                                                    : "full_tube");
  if (mode == "full_tube")
    lp.mode = OcpMode::FullTube;
  else if (mode == "additive_offline")
    lp.mode = OcpMode::AdditiveOffline;
  else
    throw ConfigError("terminal.mode must be full_tube or additive_offline");

  // [scenario]
  if (cfg.contains("scenario")) {
    const Json& sc = cfg.at("scenario");
    lp.scenario.x0 = sc.contains("x0") ? parse_vector(sc.at("x0"), "scenario.x0")
                                       : Vector::Zero(n);
    require_dims(lp.scenario.x0.size() == n, "scenario: x0 size");
    lp.scenario.steps = sc.value("steps", 50);
    lp.scenario.policy = policy_from_string(sc.value("policy", "vertex_random"));
    lp.scenario.seed = sc.value("seed", uint64_t{1});
  } else {
    lp.scenario.x0 = Vector::Zero(n);
  }
  return lp;
}

namespace {

Json serialize_tube_bound(const TubeBound& tb) {
  Json j;
  switch (tb.kind) {
    case TubeBound::Kind::Constant: j["kind"] = "constant"; break;
    case TubeBound::Kind::AffineInC: j["kind"] = "affine_in_c"; break;
    case TubeBound::Kind::VertexMax: j["kind"] = "vertex_max"; break;
    case TubeBound::Kind::EllipsoidSup: j["kind"] = "ellipsoid_sup"; break;
  }
  j["w_bar"] = tb.w_bar;
  j["L_w"] = tb.L_w;
  j["w_bar_min"] = tb.w_bar_min;
  j["d_bar"] = tb.d_bar;
  j["eps_smooth"] = tb.eps_smooth;
  if (tb.kind == TubeBound::Kind::VertexMax) {
    j["row_ax"] = dump_matrix(tb.row_ax);
    j["row_au"] = dump_matrix(tb.row_au);
    j["row_b"] = dump_vector(tb.row_b);
  }
  if (tb.kind == TubeBound::Kind::EllipsoidSup) {
    j["P"] = dump_matrix(tb.P);
    Json mx = Json::array(), mu = Json::array(), off = Json::array();
    for (const auto& M : tb.ell_Mx) mx.push_back(dump_matrix(M));
    for (const auto& M : tb.ell_Mu) mu.push_back(dump_matrix(M));
    for (const auto& v : tb.ell_off) off.push_back(dump_vector(v));
    j["Mx"] = mx;
    j["Mu"] = mu;
    j["off"] = off;
  }
  if (tb.kind == TubeBound::Kind::AffineInC) {
    require(tb.pin_family, "artifact: only the parametric custom bound serializes");
    j["pin_a"] = tb.pin_a;
    j["pin_b"] = tb.pin_b;
    j["pin_scale"] = tb.pin_scale;
  }
  return j;
}

TubeBound parse_tube_bound(const Json& j) {
  TubeBound tb;
  const std::string kind = j.at("kind").get<std::string>();
  tb.w_bar = j.at("w_bar").get<double>();
  tb.L_w = j.at("L_w").get<double>();
  tb.w_bar_min = j.at("w_bar_min").get<double>();
  tb.d_bar = j.at("d_bar").get<double>();
  tb.eps_smooth = j.at("eps_smooth").get<double>();
  if (kind == "constant") {
    tb.kind = TubeBound::Kind::Constant;
  } else if (kind == "vertex_max") {
    tb.kind = TubeBound::Kind::VertexMax;
    tb.row_ax = parse_matrix(j.at("row_ax"), "tube.row_ax");
    tb.row_au = parse_matrix(j.at("row_au"), "tube.row_au");
    tb.row_b = parse_vector(j.at("row_b"), "tube.row_b");
  } else if (kind == "ellipsoid_sup") {
    tb.kind = TubeBound::Kind::EllipsoidSup;
    tb.P = parse_matrix(j.at("P"), "tube.P");
    for (const auto& M : j.at("Mx")) tb.ell_Mx.push_back(parse_matrix(M, "tube.Mx"));
    for (const auto& M : j.at("Mu")) tb.ell_Mu.push_back(parse_matrix(M, "tube.Mu"));
    if (j.contains("off"))
      for (const auto& v : j.at("off")) tb.ell_off.push_back(parse_vector(v, "tube.off"));
  } else if (kind == "affine_in_c") {
    tb.kind = TubeBound::Kind::AffineInC;
    tb.pin_family = true;
    tb.pin_a = j.at("pin_a").get<double>();
    tb.pin_b = j.at("pin_b").get<double>();
    tb.pin_scale = j.at("pin_scale").get<double>();
    const double a = tb.pin_a, b = tb.pin_b, s = tb.pin_scale;
    tb.base = [a, b, s](const Vector& x, const Vector&) { return s * (a + b * x.norm()); };
  } else {
    throw ConfigError("unknown tube bound kind '" + kind + "'");
  }
  return tb;
}

Json serialize_terminal(const TerminalIngredients& ti) {
  Json j;
  j["P_f"] = dump_matrix(ti.P_f);
  j["K_f"] = dump_matrix(ti.K_f);
  j["gamma"] = ti.gamma;
  j["s_bar_f"] = ti.s_bar_f;
  j["w_bar"] = dump_scalar_or_inf(ti.w_bar);
  j["w_bar_min"] = ti.w_bar_min;
  j["s_bar"] = dump_scalar_or_inf(ti.s_bar);
  j["N0"] = ti.N0;
  j["N0_real"] = ti.N0_real;
  j["h_bar_f"] = ti.h_bar_f;
  j["alpha_f"] = ti.alpha_f.a;
  Json set;
  switch (ti.set.kind) {
    case TerminalSet::Kind::QuadLevel:
      set["kind"] = "quad_level";
      set["S"] = dump_matrix(ti.set.S);
      break;
    case TerminalSet::Kind::PolyBallRows:
      set["kind"] = "poly_ball";
      set["rows"] = dump_matrix(ti.set.rows);
      break;
    case TerminalSet::Kind::JointRows:
      set["kind"] = "joint_rows";
      set["rows"] = dump_matrix(ti.set.rows);
      break;
  }
  set["level"] = ti.set.level;
  set["s_cap"] = dump_scalar_or_inf(ti.set.s_cap);
  j["set"] = set;
  return j;
}

TerminalIngredients parse_terminal(const Json& j) {
  TerminalIngredients ti;
  ti.P_f = parse_matrix(j.at("P_f"), "terminal.P_f");
  ti.K_f = parse_matrix(j.at("K_f"), "terminal.K_f");
  ti.gamma = j.at("gamma").get<double>();
  ti.s_bar_f = j.at("s_bar_f").get<double>();
  ti.w_bar = num_or_inf(j.at("w_bar"), "terminal.w_bar");
  ti.w_bar_min = j.at("w_bar_min").get<double>();
  ti.s_bar = num_or_inf(j.at("s_bar"), "terminal.s_bar");
  ti.N0 = j.at("N0").get<int>();
  ti.N0_real = j.at("N0_real").get<double>();
  ti.h_bar_f = j.at("h_bar_f").get<std::vector<double>>();
  ti.alpha_f.a = j.at("alpha_f").get<std::vector<double>>();
  const Json& set = j.at("set");
  const std::string kind = set.at("kind").get<std::string>();
  if (kind == "quad_level") {
    ti.set.kind = TerminalSet::Kind::QuadLevel;
    ti.set.S = parse_matrix(set.at("S"), "terminal.set.S");
  } else if (kind == "poly_ball") {
    ti.set.kind = TerminalSet::Kind::PolyBallRows;
    ti.set.rows = parse_matrix(set.at("rows"), "terminal.set.rows");
  } else if (kind == "joint_rows") {
    ti.set.kind = TerminalSet::Kind::JointRows;
    ti.set.rows = parse_matrix(set.at("rows"), "terminal.set.rows");
  } else {
    throw ConfigError("unknown terminal set kind '" + kind + "'");
  }
  ti.set.level = set.at("level").get<double>();
  ti.set.s_cap = num_or_inf(set.at("s_cap"), "terminal.set.s_cap");
  return ti;
}

}  // namespace

std::string config_digest(const Json& config) {
  const std::string dump = config.dump();
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : dump) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  std::ostringstream os;
  os << std::hex << h;
  return os.str();
}

DesignOutput run_design(const Json& config) {
  LoadedProblem lp = load_problem(config);
  DesignOutput out;
  Design& d = out.design;
  d.model = lp.model;
  d.cost = lp.cost;
  d.constraints = lp.constraints;
  d.cert = lp.cert;
  d.N = lp.N;
  d.mode = lp.mode;
  out.uncertainty = lp.uncertainty;
  out.scenario = lp.scenario;

  // Constraint-tightening gains.
  d.gains = lp.pinned_gains ? *lp.pinned_gains : compute_constraint_gains(lp.cert, lp.constraints);
  const double c_max =
      lp.pinned_c_max ? *lp.pinned_c_max
                      : (d.gains.empty() ? 0.0 : *std::max_element(d.gains.begin(), d.gains.end()));
  out.scalars["rho"] = lp.cert.rho;
  out.scalars["c_max"] = c_max;

  // Tube bound.
  const int n = d.model.n, m = d.model.m;
  if (lp.terminal_design == "additive" || std::holds_alternative<AdditiveBall>(lp.uncertainty)) {
    if (lp.w_bar_c && lp.rho_c) {
      TubeBound tb;
      tb.kind = TubeBound::Kind::Constant;
      tb.w_bar = discretize_tube_ct(0.0, *lp.w_bar_c, *lp.rho_c, 0.0, d.model.h);
      tb.w_bar_min = tb.w_bar;
      d.tube = tb;
      out.scalars["w_bar_c"] = *lp.w_bar_c;
    } else {
      d.tube = build_constant_bound(lp.uncertainty, lp.cert, lp.constraints, n, m);
    }
    out.scalars["w_bar"] = d.tube.w_bar;
  } else if (const auto* lpv = std::get_if<LpvUncertainty>(&lp.uncertainty)) {
    if (lp.cert.shape == VdeltaShape::Polytopic) {
      d.tube = build_lpv_bound(*lpv, lp.cert, lp.constraints, lp.lpv_simplified);
    } else {
      d.tube = build_ellipsoid_bound(*lpv, lp.cert);
      if (lp.pinned_L_w) {
        // A certified slope constant takes precedence over the one computed
        // from the bundled (P, K); the artifact records both.
        out.scalars["L_w_computed"] = d.tube.L_w;
        d.tube.L_w = *lp.pinned_L_w;
      }
      if (lp.rho_c) {
        d.ct_tube = true;
        d.rho_c = *lp.rho_c;
        if (d.tube.L_w >= *lp.rho_c)
          throw DesignError("design: L_w = " + std::to_string(d.tube.L_w) +
                            " >= rho_c, the tube dynamics diverge");
      }
    }
    out.scalars["L_w"] = d.tube.L_w;
  } else {
    const auto& cb = std::get<CustomBound>(lp.uncertainty);
    d.tube = build_lipschitz_bound(cb, lp.cert);
    out.scalars["L_w"] = d.tube.L_w;
  }

  // Terminal ingredients.
  if (lp.terminal_design == "lpv") {
    LpvTerminalOptions topts;
    topts.level_scale = lp.level_scale;
    d.terminal = design_terminal_lpv(d.model, d.cert, d.cost, d.constraints, d.gains, d.tube,
                                     topts);
  } else if (lp.terminal_design == "additive") {
    require(d.tube.kind == TubeBound::Kind::Constant,
            "design: additive terminal needs a constant bound");
    d.terminal = design_terminal_additive(d.model, d.cert, d.cost, d.constraints, d.gains,
                                          d.tube.w_bar, d.N);
  } else if (lp.terminal_design == "generic") {
    d.terminal = design_terminal_generic(d.model, d.cert, d.cost, d.constraints, d.gains, d.tube,
                                         d.N);
  } else if (lp.terminal_design == "ct_parametric") {
    require(lp.rho_c.has_value(), "design: ct_parametric needs a continuous-time certificate");
    const double L_w = lp.pinned_L_w ? *lp.pinned_L_w : d.tube.L_w;
    const double T = d.N * d.model.h;
    CtParametricDesign ct = design_terminal_ct_parametric(*lp.rho_c, L_w, c_max, T);
    out.scalars["s_bar_f"] = ct.s_bar_f;
    out.scalars["gamma"] = ct.gamma;
    out.scalars["w_bar_c"] = ct.w_bar_c;

    TerminalIngredients ti;
    ti.K_f = d.cert.K;
    const Matrix A = d.model.step_jac_x(Vector::Zero(n), Vector::Zero(m));
    const Matrix B = d.model.step_jac_u(Vector::Zero(n), Vector::Zero(m));
    Matrix A_K = A + B * ti.K_f;
    if (spectral_radius(A_K) >= 1.0 - 1e-9) {
      std::tie(ti.K_f, std::ignore) = dlqr(A, B, d.cost.Q, d.cost.R);
      A_K = A + B * ti.K_f;
    }
    ti.P_f = solve_discrete_lyapunov(A_K, d.cost.Q + ti.K_f.transpose() * d.cost.R * ti.K_f);
    ti.gamma = ct.gamma;
    ti.s_bar_f = ct.s_bar_f;
    ti.w_bar = ct.w_bar_c;
    ti.w_bar_min = d.tube.w_bar_min;
    ti.s_bar = d.cert.s_bar();
    ti.set.kind = TerminalSet::Kind::QuadLevel;
    ti.set.S = d.cert.P;
    ti.set.level = ct.gamma * ct.gamma;
    ti.set.s_cap = ct.s_bar_f;
    Eigen::SelfAdjointEigenSolver<Matrix> es(ti.P_f, Eigen::EigenvaluesOnly);
    const double lmaxPf = es.eigenvalues().maxCoeff();
    Eigen::SelfAdjointEigenSolver<Matrix> esP(d.cert.P, Eigen::EigenvaluesOnly);
    const double vf_max = lmaxPf * ct.gamma * ct.gamma / esP.eigenvalues().minCoeff();
    ti.alpha_f = KPoly{{2.0 * std::sqrt(vf_max * lmaxPf), lmaxPf}};
    d.terminal = ti;
  } else {
    throw ConfigError("terminal.design must be lpv, additive, generic, or ct_parametric");
  }

  if (!lp.constraints.hoelder_indices().empty())
    design_hoelder_terms(d.terminal, d.cert, d.constraints, d.tube, d.N, 4000, 11);

  if (lp.terminal_design == "additive") {
    out.scalars["s_bar_f"] = d.terminal.s_bar_f;
    out.scalars["gamma"] = d.terminal.gamma;
  }
  out.scalars["w_bar_min"] = d.terminal.w_bar_min;
  if (!lp.terminal_design.empty() && lp.terminal_design != "ct_parametric") {
    out.scalars["N0"] = d.terminal.N0;
  }

  // Artifact.
  Json art;
  art["meta"] = {{"tool", "tubempc"},
                 {"version", "0.1.0"},
                 {"config_digest", config_digest(config)},
                 {"N", d.N},
                 {"mode", d.mode == OcpMode::FullTube ? "full_tube" : "additive_offline"},
                 {"ct_tube", d.ct_tube}};
  if (d.ct_tube) art["meta"]["rho_c"] = d.rho_c;
  art["config"] = config;
  art["gains"] = d.gains;
  art["tube_bound"] = serialize_tube_bound(d.tube);
  art["terminal"] = serialize_terminal(d.terminal);
  art["scalars"] = out.scalars;
  out.artifact = art;
  return out;
}

DesignOutput design_from_artifact(const Json& artifact) {
  if (!artifact.contains("config") || !artifact.contains("meta"))
    throw ConfigError("artifact: missing config echo or meta section");
  const Json& config = artifact.at("config");
  if (artifact.at("meta").value("config_digest", "") != config_digest(config))
    throw ConfigError("artifact: config digest mismatch");

  LoadedProblem lp = load_problem(config);
  DesignOutput out;
  Design& d = out.design;
  d.model = lp.model;
  d.cost = lp.cost;
  d.constraints = lp.constraints;
  d.cert = lp.cert;
  d.N = artifact.at("meta").at("N").get<int>();
  d.mode = artifact.at("meta").at("mode").get<std::string>() == "full_tube"
               ? OcpMode::FullTube
               : OcpMode::AdditiveOffline;
  d.ct_tube = artifact.at("meta").value("ct_tube", false);
  if (d.ct_tube) d.rho_c = artifact.at("meta").at("rho_c").get<double>();
  d.gains = artifact.at("gains").get<std::vector<double>>();
  d.tube = parse_tube_bound(artifact.at("tube_bound"));
  d.terminal = parse_terminal(artifact.at("terminal"));
  out.uncertainty = lp.uncertainty;
  out.scenario = lp.scenario;
  if (artifact.contains("scalars"))
    for (const auto& [k, v] : artifact.at("scalars").items())
      out.scalars[k] = v.get<double>();
  out.artifact = artifact;
  return out;
}

Json resolve_config(const std::string& name_or_path) {
  if (is_preset(name_or_path)) return preset_config(name_or_path);
  std::ifstream in(name_or_path);
  if (!in) throw ConfigError("cannot open config '" + name_or_path + "' (not a preset either)");
  Json cfg;
  try {
    in >> cfg;
  } catch (const std::exception& e) {
    throw ConfigError("config parse error in '" + name_or_path + "': " + e.what());
  }
  return cfg;
}

}  // namespace tubempc
