#include <cmath>

#include <nlohmann/json.hpp>

#include "tubempc/config.hpp"

namespace tubempc {

namespace {

// 10-state quadrotor: positions, velocities, pitch/roll angles and rates.
// Parameters d0, d1, n0, k_T, g as in the bundled benchmark scenarios.
constexpr double kD0 = 10.0, kD1 = 8.0, kN0 = 10.0, kKT = 0.91, kG = 9.8;

Vector quadrotor_rhs(const Vector& x, const Vector& u) {
  Vector dx(10);
  dx[0] = x[3];
  dx[1] = x[4];
  dx[2] = x[5];
  dx[3] = kG * std::tan(x[6]);
  dx[4] = kG * std::tan(x[8]);
  dx[5] = -kG + kKT * u[2];
  dx[6] = -kD1 * x[6] + x[7];
  dx[7] = -kD0 * x[6] + kN0 * u[0];
  dx[8] = -kD1 * x[8] + x[9];
  dx[9] = -kD0 * x[8] + kN0 * u[1];
  return dx;
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

Json eye(int n, double v = 1.0) { return dump_matrix(v * Matrix::Identity(n, n)); }

// Quadratic certificate for the quadrotor benchmarks: LQR feedback on the
// RK4 linearization at hover, with the metric scaled so the tightest
// constraint gain is exactly 1 (the unit tube ball then fits the
// constraint set).
struct QuadCert {
  Matrix P, K;
  double c_delta_l, c_delta_u, kappa_max;
};

const QuadCert& quadrotor_certificate() {
  static const QuadCert cert = [] {
    const double h = 0.3;
    Vector x_ref = Vector::Zero(10);
    x_ref[0] = 3.0;
    x_ref[1] = 3.0;
    x_ref[2] = 10.0;
    Vector u_ref = Vector::Zero(3);
    u_ref[2] = kG / kKT;
    NominalModel mdl = registry_model("quadrotor10", h, x_ref, u_ref);
    const Matrix A = mdl.step_jac_x(Vector::Zero(10), Vector::Zero(3));
    const Matrix B = mdl.step_jac_u(Vector::Zero(10), Vector::Zero(3));
    Matrix Qw = Matrix::Identity(10, 10);
    Matrix Rw = Matrix::Identity(3, 3);
    auto [K, P0] = dlqr(A, B, Qw, Rw);

    // Constraint rows in deviation coordinates (same set as the presets).
    std::vector<std::pair<Vector, Vector>> rows;
    auto push_state = [&](int j, double lo, double hi) {
      if (std::isfinite(hi)) {
        Vector Lx = Vector::Zero(10);
        Lx[j] = 1.0 / (hi - x_ref[j]);
        rows.emplace_back(Lx, Vector::Zero(3));
      }
      if (std::isfinite(lo)) {
        Vector Lx = Vector::Zero(10);
        Lx[j] = -1.0 / (x_ref[j] - lo);
        rows.emplace_back(Lx, Vector::Zero(3));
      }
    };
    auto push_input = [&](int j, double lo, double hi) {
      Vector Lu = Vector::Zero(3);
      Lu[j] = 1.0 / (hi - u_ref[j]);
      rows.emplace_back(Vector::Zero(10), Lu);
      Lu[j] = -1.0 / (u_ref[j] - lo);
      rows.emplace_back(Vector::Zero(10), Lu);
    };
    const double quarter_pi = 3.14159265358979323846 / 4.0;
    const double ninth_pi = 3.14159265358979323846 / 9.0;
    push_state(0, -kInf, 4.0);
    push_state(6, -quarter_pi, quarter_pi);
    push_state(8, -quarter_pi, quarter_pi);
    push_input(0, -ninth_pi, ninth_pi);
    push_input(1, -ninth_pi, ninth_pi);
    push_input(2, 0.0, 2.0 * kG);

    Eigen::SelfAdjointEigenSolver<Matrix> es0(P0);
    const Matrix P0_inv_sqrt = es0.operatorInverseSqrt();
    double cmax = 0.0;
    for (const auto& [Lx, Lu] : rows) {
      const Vector row = Lx + K.transpose() * Lu;
      cmax = std::max(cmax, (P0_inv_sqrt * row).norm());
    }
    QuadCert out;
    out.P = (cmax * cmax) * P0;  // tightest exact gain becomes 1
    out.K = K;
    Eigen::SelfAdjointEigenSolver<Matrix> es(out.P, Eigen::EigenvaluesOnly);
    out.c_delta_l = es.eigenvalues().minCoeff();
    out.c_delta_u = es.eigenvalues().maxCoeff();
    Eigen::JacobiSVD<Matrix> svd(K);
    const double kn = svd.singularValues()[0];
    out.kappa_max = kn * kn / out.c_delta_l;
    return out;
  }();
  return cert;
}

Json quadrotor_base_config() {
  Json cfg;
  cfg["model"] = {{"kind", "registry"}, {"name", "quadrotor10"}, {"h", 0.3}};
  Matrix Q = 0.01 * Matrix::Identity(10, 10);
  Q(0, 0) = Q(1, 1) = Q(2, 2) = 1.0;
  cfg["cost"] = {{"Q", dump_matrix(Q)},
                 {"R", eye(3, 0.01)},
                 {"x_ref", {3.0, 3.0, 10.0, 0, 0, 0, 0, 0, 0, 0}},
                 {"u_ref", {0.0, 0.0, kG / kKT}}};
  const double quarter_pi = 3.14159265358979323846 / 4.0;
  const double ninth_pi = 3.14159265358979323846 / 9.0;
  cfg["constraints"] = {
      {"box",
       {{"x_hi", {4.0, "inf", "inf", "inf", "inf", "inf", quarter_pi, "inf", quarter_pi, "inf"}},
        {"x_lo",
         {"-inf", "-inf", "-inf", "-inf", "-inf", "-inf", -quarter_pi, "-inf", -quarter_pi,
          "-inf"}},
        {"u_hi", {ninth_pi, ninth_pi, 2.0 * kG}},
        {"u_lo", {-ninth_pi, -ninth_pi, 0.0}}}},
      {"gains", {1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0}}};
  const QuadCert& qc = quadrotor_certificate();
  cfg["certificate"] = {{"shape", "quadratic"},
                        {"P", dump_matrix(qc.P)},
                        {"K", dump_matrix(qc.K)},
                        {"c_delta_l", qc.c_delta_l},
                        {"c_delta_u", qc.c_delta_u},
                        {"delta_loc", 1.0},
                        {"kappa_max", qc.kappa_max}};
  cfg["scenario"] = {{"x0", {0.0, 0.0, 2.0, 0, 0, 0, 0, 0, 0, 0}},
                     {"steps", 30},
                     {"policy", "vertex_random"},
                     {"seed", 1}};
  return cfg;
}

}  // namespace

NominalModel registry_model(const std::string& name, double h, const Vector& x_ref,
                            const Vector& u_ref) {
  if (name == "lti_scalar") {
    Matrix A(1, 1), B(1, 1);
    A << 0.5;
    B << 1.0;
    return NominalModel::lti(A, B);
  }
  if (name == "lpv_2d") {
    Matrix A(2, 2), B(2, 1);
    A << 0.7, 0.1, 0.05, 0.65;
    B << 0.5, 1.0;
    return NominalModel::lti(A, B);
  }
  if (name == "quadrotor10") {
    require(h > 0.0, "registry: quadrotor10 needs a sampling time h");
    require_dims(x_ref.size() == 10 && u_ref.size() == 3, "registry: quadrotor10 reference size");
    Vector xr = x_ref, ur = u_ref;
    auto rhs = [xr, ur](const Vector& dx, const Vector& du) {
      return quadrotor_rhs(xr + dx, ur + du);
    };
    NominalModel mdl = NominalModel::continuous(10, 3, h, rhs);
    return mdl;
  }
  throw ConfigError("unknown registry model '" + name + "'");
}

bool is_preset(const std::string& name) {
  for (const auto& p : preset_names())
    if (p == name) return true;
  return false;
}

std::vector<std::string> preset_names() {
  return {"lti_scalar_lpv", "lpv_2d", "quadrotor10_additive", "quadrotor10_parametric",
          "hoelder_scalar"};
}

Json preset_config(const std::string& name) {
  if (name == "lti_scalar_lpv") {
    Json cfg;
    cfg["model"] = {{"kind", "lti"}, {"A", {{0.8}}}, {"B", {{1.0}}}};
    cfg["cost"] = {{"Q", {{1.0}}}, {"R", {{1.0}}}};
    cfg["constraints"] = {{"box",
                           {{"x_lo", {-1.0}},
                            {"x_hi", {1.0}},
                            {"u_lo", {-1.0}},
                            {"u_hi", {1.0}}}}};
    cfg["certificate"] = {{"shape", "polytopic"},
                          {"rows", {{1.0}, {-1.0}}},
                          {"K", {{0.0}}},
                          {"c_delta_l", 1.0},
                          {"c_delta_u", 1.0},
                          {"delta_loc", 4.0},
                          {"kappa_max", 0.0}};
    cfg["uncertainty"] = {{"variant", "lpv"},
                          {"A", {{{0.1}}}},
                          {"B", {{{0.0}}}},
                          {"theta_vertices", {{1.0}, {-1.0}}},
                          {"E", {{1.0}}},
                          {"d_vertices", {{0.05}, {-0.05}}}};
    cfg["terminal"] = {{"design", "lpv"}, {"N", 8}};
    cfg["scenario"] = {{"x0", {0.6}}, {"steps", 50}, {"policy", "vertex_random"}, {"seed", 1}};
    return cfg;
  }

  if (name == "lpv_2d") {
    Json cfg;
    cfg["model"] = {{"kind", "lti"},
                    {"A", {{0.7, 0.1}, {0.05, 0.65}}},
                    {"B", {{0.5}, {1.0}}}};
    cfg["cost"] = {{"Q", eye(2)}, {"R", {{1.0}}}};
    cfg["constraints"] = {{"box",
                           {{"x_lo", {-2.0, -2.0}},
                            {"x_hi", {2.0, 2.0}},
                            {"u_lo", {-1.5}},
                            {"u_hi", {1.5}}}}};
    cfg["certificate"] = {{"shape", "polytopic"},
                          {"rows", {{1.0, 0.0}, {-1.0, 0.0}, {0.0, 1.0}, {0.0, -1.0}}},
                          {"K", {{-0.1, -0.3}}},
                          {"c_delta_l", 0.5},
                          {"c_delta_u", 1.0},
                          {"delta_loc", 4.0},
                          {"kappa_max", 0.2}};
    cfg["uncertainty"] = {{"variant", "lpv"},
                          {"A", {{{0.05, 0.0}, {0.0, 0.05}}}},
                          {"B", {{{0.0}, {0.0}}}},
                          {"theta_vertices", {{1.0}, {-1.0}}},
                          {"E", eye(2)},
                          {"d_vertices",
                           {{0.02, 0.02}, {0.02, -0.02}, {-0.02, 0.02}, {-0.02, -0.02}}}};
    cfg["terminal"] = {{"design", "lpv"}, {"N", 8}};
    cfg["scenario"] = {{"x0", {1.0, -0.5}}, {"steps", 50}, {"policy", "vertex_random"},
                       {"seed", 1}};
    return cfg;
  }

  if (name == "quadrotor10_additive") {
    Json cfg = quadrotor_base_config();
    Matrix E = Matrix::Zero(10, 3);
    E(0, 0) = 0.1;
    E(1, 1) = 0.3;
    E(2, 2) = 0.5;
    cfg["certificate"]["rho_c"] = 0.192;
    cfg["uncertainty"] = {{"variant", "additive_ball"},
                          {"E", dump_matrix(E)},
                          {"radius", 1.0},
                          {"w_bar_c", 0.1646}};
    cfg["terminal"] = {{"design", "additive"}, {"N", 10}, {"mode", "additive_offline"}};
    return cfg;
  }

  if (name == "quadrotor10_parametric") {
    Json cfg = quadrotor_base_config();
    cfg["certificate"]["rho_c"] = 0.4;
    // +-10% uncertainty on d0 and n0 enters the pitch/roll rate rows.
    Matrix A1 = Matrix::Zero(10, 10);
    A1(7, 6) = -1.0;
    A1(9, 8) = -1.0;
    Matrix B2 = Matrix::Zero(10, 3);
    B2(7, 0) = 1.0;
    B2(9, 1) = 1.0;
    cfg["uncertainty"] = {
        {"variant", "lpv"},
        {"A", {dump_matrix(A1), dump_matrix(Matrix::Zero(10, 10))}},
        {"B", {dump_matrix(Matrix::Zero(10, 3)), dump_matrix(B2)}},
        {"theta_vertices", {{1.0, 1.0}, {1.0, -1.0}, {-1.0, 1.0}, {-1.0, -1.0}}}};
    cfg["terminal"] = {{"design", "ct_parametric"},
                       {"N", 15},
                       {"L_w", 0.3},
                       {"c_max", 1.0},
                       {"mode", "full_tube"}};
    cfg["scenario"]["steps"] = 10;
    return cfg;
  }

  if (name == "hoelder_scalar") {
    Json cfg;
    cfg["model"] = {{"kind", "lti"}, {"A", {{0.5}}}, {"B", {{1.0}}}};
    cfg["cost"] = {{"Q", {{1.0}}}, {"R", {{1.0}}}};
    cfg["constraints"] = {
        {"box",
         {{"x_lo", {-1.0}}, {"x_hi", {1.0}}, {"u_lo", {-1.0}}, {"u_hi", {1.0}}}},
        {"hoelder",
         {{{"name", "state_norm_sq"}, {"bound", 1.0}, {"c_tilde", 3.0}, {"lambda", 1.0}}}}};
    cfg["certificate"] = {{"shape", "polytopic"},
                          {"rows", {{1.0}, {-1.0}}},
                          {"K", {{0.0}}},
                          {"c_delta_l", 1.0},
                          {"c_delta_u", 1.0},
                          {"delta_loc", 1.0},
                          {"kappa_max", 0.0}};
    cfg["uncertainty"] = {{"variant", "lpv"},
                          {"A", {{{0.05}}}},
                          {"B", {{{0.0}}}},
                          {"theta_vertices", {{1.0}, {-1.0}}},
                          {"E", {{1.0}}},
                          {"d_vertices", {{0.01}, {-0.01}}}};
    cfg["terminal"] = {{"design", "lpv"}, {"N", 8}, {"level_scale", 0.5}};
    cfg["scenario"] = {{"x0", {0.5}}, {"steps", 30}, {"policy", "vertex_random"}, {"seed", 1}};
    return cfg;
  }

  throw ConfigError("unknown preset '" + name + "'");
}

}  // namespace tubempc
