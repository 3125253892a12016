#include <doctest.h>

#include "tubempc/config.hpp"
#include "tubempc/terminal.hpp"

using namespace tubempc;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<int>(v.size()));
  int i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

ConstraintSet abs_box1d() {
  ConstraintSet cs;
  for (double s : {1.0, -1.0}) {
    AffineConstraint a;
    a.Lx = vec({s});
    a.Lu = vec({0.0});
    cs.items.push_back(a);
  }
  return cs;
}

StabilizabilityCertificate scalar_quad_cert(double rho) {
  StabilizabilityCertificate c;
  c.shape = VdeltaShape::Quadratic;
  c.P = Matrix::Identity(1, 1);
  c.K = Matrix::Zero(1, 1);
  c.rho = rho;
  c.c_delta_l = 1.0;
  c.c_delta_u = 1.0;
  c.delta_loc = 4.0;
  c.kappa_max = 0.0;
  return c;
}

TubeBound constant_tube(double w) {
  TubeBound tb;
  tb.kind = TubeBound::Kind::Constant;
  tb.w_bar = w;
  tb.w_bar_min = w;
  return tb;
}

}  // namespace

TEST_CASE("generic terminal design, hand-checked scalar pipeline") {
  Matrix A(1, 1), B(1, 1);
  A << 0.5;
  B << 1.0;
  NominalModel mdl = NominalModel::lti(A, B);
  StageCost cost;
  cost.Q = Matrix::Identity(1, 1);
  cost.R = Matrix::Identity(1, 1);
  cost.x_ref = Vector::Zero(1);
  cost.u_ref = Vector::Zero(1);
  ConstraintSet cs = abs_box1d();
  StabilizabilityCertificate cert = scalar_quad_cert(0.5);
  std::vector<double> gains = compute_constraint_gains(cert, cs);
  REQUIRE(gains.size() == 2);
  CHECK(gains[0] == doctest::Approx(1.0));

  SUBCASE("constant bound, closed-form outputs") {
    const int N = 10;
    TerminalIngredients ti =
        design_terminal_generic(mdl, cert, cost, cs, gains, constant_tube(0.01), N);

    // Independent hand evaluation of the three emitted formulas: the envelope
    // for a constant bound is a0 = 0.01 exactly, so the level solves
    // a0/(1-rho) = 1 - sqrt(gamma).
    const double gamma = std::pow(1.0 - 0.01 / 0.5, 2);
    CHECK(ti.gamma == doctest::Approx(gamma).epsilon(1e-6));
    CHECK(ti.s_bar_f == doctest::Approx(1.0 - std::sqrt(gamma)).epsilon(1e-6));

    const double lmax = ti.P_f(0, 0);
    KPoly alpha_f{{2.0 * std::sqrt(ti.gamma * lmax), lmax}};
    const double t1 = alpha_f.inverse(ti.gamma);
    const double X = alpha_f.inverse(t1 * t1);  // alpha_l(r) = r^2
    CHECK(ti.w_bar == doctest::Approx(std::pow(0.5, -N) * X).epsilon(1e-6));
    const double n0 = std::log(X / (0.5 * ti.s_bar_f)) / std::log(0.5);
    CHECK(ti.N0_real == doctest::Approx(n0).epsilon(1e-6));

    // Identity from the emitted triple: rho^(N - N0) w_bar = (1 - rho) s_bar_f.
    CHECK(std::pow(0.5, N - ti.N0_real) * ti.w_bar ==
          doctest::Approx((1.0 - 0.5) * ti.s_bar_f).epsilon(1e-9));
  }

  SUBCASE("zero uncertainty still yields positive cap and a horizon") {
    TerminalIngredients ti =
        design_terminal_generic(mdl, cert, cost, cs, gains, constant_tube(0.0), 5);
    CHECK(ti.w_bar > 0.0);
    CHECK(ti.N0 >= 1);
    CHECK(ti.gamma > 0.5);  // margin-limited level
  }

  SUBCASE("too-short horizon rejected with the minimum named") {
    // Large uncertainty pushes N0 up.
    TubeBound tb = constant_tube(0.2);
    CHECK_THROWS_WITH_AS(
        design_terminal_generic(mdl, cert, cost, cs, gains, tb, 1),
        doctest::Contains("need N >="), DesignError);
  }

  SUBCASE("uncertainty exceeding the margin is a descriptive error") {
    CHECK_THROWS_AS(design_terminal_generic(mdl, cert, cost, cs, gains, constant_tube(2.0), 10),
                    DesignError);
  }

  SUBCASE("steep tube slope rejected by the premise check") {
    TubeBound tb = constant_tube(0.01);
    tb.kind = TubeBound::Kind::VertexMax;
    tb.row_ax = Matrix::Zero(1, 1);
    tb.row_au = Matrix::Zero(1, 1);
    tb.row_b = vec({0.01});
    tb.L_w = 0.7;  // 1 - rho = 0.5 < L_w
    CHECK_THROWS_WITH_AS(design_terminal_generic(mdl, cert, cost, cs, gains, tb, 10),
                         doctest::Contains("a2"), DesignError);
  }
}

TEST_CASE("lpv terminal design") {
  DesignOutput scalar = run_design(preset_config("lti_scalar_lpv"));

  SUBCASE("benchmark condition 0.95 <= 1 succeeds") {
    CHECK(scalar.design.terminal.set.kind == TerminalSet::Kind::JointRows);
    CHECK(scalar.design.terminal.set.level == doctest::Approx(1.0));
    CHECK(!scalar.design.terminal.w_bounded());
    CHECK(scalar.design.terminal.s_bar == doctest::Approx(2.0));  // sqrt(delta_loc)
  }
  SUBCASE("violated condition reports the sum") {
    // rho = 0.95 via A0 = 0.95: sum = 0.95 + 0.1 + 0.05 = 1.10 > 1
    Json cfg = preset_config("lti_scalar_lpv");
    cfg["model"]["A"] = {{0.95}};
    cfg["certificate"].erase("rho");
    CHECK_THROWS_WITH_AS(run_design(cfg), doctest::Contains("exceeds 1"), DesignError);
  }
  SUBCASE("terminal rows with c_max = 2") {
    Matrix A(1, 1), B(1, 1);
    A << 0.5;
    B << 1.0;
    NominalModel mdl = NominalModel::lti(A, B);
    StageCost cost;
    cost.Q = Matrix::Identity(1, 1);
    cost.R = Matrix::Identity(1, 1);
    cost.x_ref = Vector::Zero(1);
    cost.u_ref = Vector::Zero(1);
    StabilizabilityCertificate cert;
    cert.shape = VdeltaShape::Polytopic;
    cert.rows = Matrix(2, 1);
    cert.rows << 1.0, -1.0;
    cert.K = Matrix::Zero(1, 1);
    cert.rho = 0.5;
    cert.c_delta_l = 1.0;
    cert.c_delta_u = 1.0;
    cert.delta_loc = 4.0;
    cert.kappa_max = 0.0;
    TubeBound tb;
    tb.kind = TubeBound::Kind::VertexMax;
    tb.row_ax = Matrix::Zero(2, 1);
    tb.row_au = Matrix::Zero(2, 1);
    tb.row_b = Vector::Zero(2);
    tb.L_w = 0.0;
    tb.d_bar = 0.0;
    TerminalIngredients ti =
        design_terminal_lpv(mdl, cert, cost, abs_box1d(), {2.0, 2.0}, tb);
    CHECK(ti.set.kind == TerminalSet::Kind::JointRows);
    CHECK(ti.set.level == doctest::Approx(0.5));
    // |x| + s <= 0.5 holds exactly on the boundary
    CHECK(ti.set.residual(vec({0.3}), 0.2) == doctest::Approx(0.0));
    CHECK(ti.set.residual(vec({0.3}), 0.3) > 0.0);
  }
}

TEST_CASE("additive terminal design") {
  Matrix A(1, 1), B(1, 1);
  A << 0.5;
  B << 1.0;
  NominalModel mdl = NominalModel::lti(A, B);
  StageCost cost;
  cost.Q = Matrix::Identity(1, 1);
  cost.R = Matrix::Identity(1, 1);
  cost.x_ref = Vector::Zero(1);
  cost.u_ref = Vector::Zero(1);
  ConstraintSet cs = abs_box1d();
  StabilizabilityCertificate cert = scalar_quad_cert(0.5);
  std::vector<double> gains = {1.0, 1.0};

  SUBCASE("zero disturbance keeps the nominal terminal set") {
    TerminalIngredients ti = design_terminal_additive(mdl, cert, cost, cs, gains, 0.0, 10);
    CHECK(ti.gamma == doctest::Approx(1.0));  // 1/c_max
    CHECK(ti.s_bar_f == doctest::Approx(0.0));
  }
  SUBCASE("accumulated tube matches the iterated recursion") {
    const double w = 0.07;
    const int N = 12;
    TerminalIngredients ti = design_terminal_additive(mdl, cert, cost, cs, gains, w, N);
    double s = 0.0;
    for (int k = 0; k < N; ++k) s = propagate_tube(s, w, cert.rho);
    CHECK(ti.s_bar_f == doctest::Approx(s).epsilon(1e-12));
    CHECK(ti.gamma == doctest::Approx(1.0 - s).epsilon(1e-12));
    CHECK(ti.w_bar_min == doctest::Approx(w));
  }
  SUBCASE("tube exceeding sqrt(delta_loc) rejected") {
    StabilizabilityCertificate tight = cert;
    tight.delta_loc = 0.01;  // s_bar = 0.1
    CHECK_THROWS_WITH_AS(design_terminal_additive(mdl, tight, cost, cs, gains, 0.2, 10),
                         doctest::Contains("delta_loc"), DesignError);
  }
  SUBCASE("nonpositive margin rejected") {
    CHECK_THROWS_WITH_AS(design_terminal_additive(mdl, cert, cost, cs, gains, 0.6, 10),
                         doctest::Contains("gamma"), DesignError);
  }
}

TEST_CASE("ct parametric recipe") {
  SUBCASE("pinned benchmark constants") {
    CtParametricDesign d = design_terminal_ct_parametric(0.4, 0.3, 1.0, 4.5);
    CHECK(d.s_bar_f == doctest::Approx(0.75));
    CHECK(d.gamma == doctest::Approx(0.25));
    CHECK(d.w_bar_c == doctest::Approx(0.25 * 0.4 * std::exp(1.8)).epsilon(1e-12));
  }
  SUBCASE("diverging slope rejected") {
    CHECK_THROWS_AS(design_terminal_ct_parametric(0.3, 0.3, 1.0, 4.5), DesignError);
  }
}

TEST_CASE("hoelder terminal constants") {
  StabilizabilityCertificate cert = scalar_quad_cert(0.5);
  Matrix A(1, 1), B(1, 1);
  A << 0.5;
  B << 1.0;
  NominalModel mdl = NominalModel::lti(A, B);
  StageCost cost;
  cost.Q = Matrix::Identity(1, 1);
  cost.R = Matrix::Identity(1, 1);
  cost.x_ref = Vector::Zero(1);
  cost.u_ref = Vector::Zero(1);

  SUBCASE("no hoelder rows leaves the list empty") {
    ConstraintSet cs = abs_box1d();
    TerminalIngredients ti =
        design_terminal_additive(mdl, cert, cost, cs, {1.0, 1.0}, 0.05, 8);
    design_hoelder_terms(ti, cert, cs, constant_tube(0.05), 8, 500, 3);
    CHECK(ti.h_bar_f.empty());
  }

  SUBCASE("constant bound closed form, lambda = 1") {
    ConstraintSet cs = abs_box1d();
    HoelderConstraint hc;
    hc.g = [](const Vector& x, const Vector&) { return x.squaredNorm() - 10.0; };
    hc.c_tilde = 1.0;
    hc.lambda = 1.0;
    cs.items.push_back(hc);
    const double w = 0.05;
    const int N = 8;
    TerminalIngredients ti =
        design_terminal_additive(mdl, cert, cost, cs, {1.0, 1.0}, w, N);
    design_hoelder_terms(ti, cert, cs, constant_tube(w), N, 1000, 3);
    REQUIRE(ti.h_bar_f.size() == 1);
    const double expected = (w - std::pow(0.5, N) * w) / (1.0 - 0.5);
    CHECK(ti.h_bar_f[0] == doctest::Approx(expected).epsilon(1e-9));
  }

  SUBCASE("lambda = 2 changes the denominator from 0.5 to 0.75") {
    ConstraintSet cs = abs_box1d();
    HoelderConstraint h1;
    h1.g = [](const Vector& x, const Vector&) { return x.squaredNorm() - 10.0; };
    h1.c_tilde = 1.0;
    h1.lambda = 1.0;
    HoelderConstraint h2 = h1;
    h2.lambda = 2.0;
    cs.items.push_back(h1);
    cs.items.push_back(h2);
    const double w = 0.05;
    const int N = 8;
    TerminalIngredients ti =
        design_terminal_additive(mdl, cert, cost, cs, {1.0, 1.0}, w, N);
    design_hoelder_terms(ti, cert, cs, constant_tube(w), N, 1000, 3);
    REQUIRE(ti.h_bar_f.size() == 2);
    const double e1 = (w - 0.5 * std::pow(0.5, N - 1) * w) / 0.5;
    const double e2 = (w * w - 0.25 * std::pow(0.5, 2 * (N - 1)) * w * w) / 0.75;
    CHECK(ti.h_bar_f[0] == doctest::Approx(e1).epsilon(1e-9));
    CHECK(ti.h_bar_f[1] == doctest::Approx(e2).epsilon(1e-9));
  }

  SUBCASE("terminal set unable to absorb the constant errors out with a witness") {
    ConstraintSet cs = abs_box1d();
    HoelderConstraint hc;
    hc.g = [](const Vector& x, const Vector&) { return x.squaredNorm() - 1e-4; };
    hc.c_tilde = 1.0;
    hc.lambda = 1.0;
    cs.items.push_back(hc);
    TerminalIngredients ti =
        design_terminal_additive(mdl, cert, cost, cs, {1.0, 1.0}, 0.05, 8);
    CHECK_THROWS_WITH_AS(design_hoelder_terms(ti, cert, cs, constant_tube(0.05), 8, 1000, 3),
                         doctest::Contains("|x|"), DesignError);
  }
}

TEST_CASE("sampled terminal conditions hold on the bundled designs") {
  for (const char* name : {"lti_scalar_lpv", "lpv_2d", "hoelder_scalar"}) {
    CAPTURE(name);
    DesignOutput d = run_design(preset_config(name));
    TerminalCheckReport rep =
        check_terminal_conditions(d.design.terminal, d.design.model, d.design.cert,
                                  d.design.cost, d.design.constraints, d.design.gains,
                                  d.design.tube, d.design.N, 1000, 17);
    CHECK(rep.samples == 1000);
    CHECK(rep.worst_decrease <= 1e-7);
    CHECK(rep.worst_invariance <= 1e-7);
    CHECK(rep.worst_tightening <= 1e-9);
  }
}

TEST_CASE("N0 identity on generic designs across horizons") {
  Matrix A(1, 1), B(1, 1);
  A << 0.5;
  B << 1.0;
  NominalModel mdl = NominalModel::lti(A, B);
  StageCost cost;
  cost.Q = Matrix::Identity(1, 1);
  cost.R = Matrix::Identity(1, 1);
  cost.x_ref = Vector::Zero(1);
  cost.u_ref = Vector::Zero(1);
  ConstraintSet cs = abs_box1d();
  StabilizabilityCertificate cert = scalar_quad_cert(0.5);
  auto gains = compute_constraint_gains(cert, cs);
  for (int N : {5, 10, 20}) {
    TerminalIngredients ti =
        design_terminal_generic(mdl, cert, cost, cs, gains, constant_tube(0.02), N);
    CHECK(std::pow(cert.rho, N - ti.N0_real) * ti.w_bar ==
          doctest::Approx((1.0 - cert.rho) * ti.s_bar_f).epsilon(1e-9));
  }
}
