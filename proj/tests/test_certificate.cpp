#include <doctest.h>

#include "tubempc/certificate.hpp"
#include "tubempc/config.hpp"
#include "tubempc/solvers.hpp"

using namespace tubempc;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<int>(v.size()));
  int i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

Matrix interval_rows() {
  Matrix rows(2, 1);
  rows << 1.0, -1.0;
  return rows;
}

StabilizabilityCertificate quad_cert(double p, double K, double rho) {
  StabilizabilityCertificate c;
  c.shape = VdeltaShape::Quadratic;
  c.P = Matrix::Constant(1, 1, p);
  c.K = Matrix::Constant(1, 1, K);
  c.rho = rho;
  c.c_delta_l = p;
  c.c_delta_u = p;
  c.delta_loc = 1.0;
  c.kappa_max = K * K / p;
  return c;
}

ConstraintSet box1d() {
  ConstraintSet cs;
  for (double s : {1.0, -1.0}) {
    AffineConstraint a;
    a.Lx = vec({s});
    a.Lu = vec({0.0});
    cs.items.push_back(a);
    AffineConstraint b;
    b.Lx = vec({0.0});
    b.Lu = vec({s});
    cs.items.push_back(b);
  }
  return cs;
}

}  // namespace

TEST_CASE("polytopic contraction rate") {
  SUBCASE("scalar interval") {
    CHECK(contraction_rate_polytopic(Matrix::Constant(1, 1, 0.5), interval_rows()) ==
          doctest::Approx(0.5));
    CHECK(contraction_rate_polytopic(Matrix::Zero(1, 1), interval_rows()) ==
          doctest::Approx(0.0));
  }
  SUBCASE("diagonal map on the unit box attains the max at a vertex") {
    Matrix rows(4, 2);
    rows << 1, 0, -1, 0, 0, 1, 0, -1;
    Matrix A = Matrix::Zero(2, 2);
    A(0, 0) = 0.5;
    A(1, 1) = 0.8;
    // oracle: enumerate the four box vertices
    double oracle = 0.0;
    for (double sx : {1.0, -1.0})
      for (double sy : {1.0, -1.0}) {
        Vector v = vec({sx, sy});
        for (int i = 0; i < 4; ++i) oracle = std::max(oracle, rows.row(i).dot(A * v));
      }
    CHECK(contraction_rate_polytopic(A, rows) == doctest::Approx(oracle).epsilon(1e-10));
    CHECK(oracle == doctest::Approx(0.8));
  }
  SUBCASE("not-contractive flag") {
    bool flag = false;
    contraction_rate_polytopic(Matrix::Constant(1, 1, 1.2), interval_rows(), &flag);
    CHECK(flag);
  }
  SUBCASE("positive homogeneity") {
    Matrix rows(4, 2);
    rows << 1, 0.2, -1, -0.2, 0.3, 1, -0.3, -1;
    Matrix A(2, 2);
    A << 0.4, 0.1, -0.05, 0.3;
    const double r1 = contraction_rate_polytopic(A, rows);
    const double r2 = contraction_rate_polytopic(2.5 * A, rows);
    CHECK(r2 == doctest::Approx(2.5 * r1).epsilon(1e-9));
  }
  SUBCASE("unbounded polytope rejected") {
    Matrix rows(1, 2);
    rows << 1, 0;
    CHECK_THROWS_AS(contraction_rate_polytopic(Matrix::Identity(2, 2) * 0.5, rows), DesignError);
  }
}

TEST_CASE("constraint gains, quadratic shape") {
  SUBCASE("unit data") {
    StabilizabilityCertificate c = quad_cert(1.0, 0.0, 0.5);
    ConstraintSet cs;
    AffineConstraint a;
    a.Lx = vec({1.0});
    a.Lu = vec({0.0});
    cs.items.push_back(a);
    auto g = compute_constraint_gains(c, cs);
    CHECK(g[0] == doctest::Approx(1.0));
  }
  SUBCASE("L=2, c_delta_l=0.25, kappa_max=5 gives 6, verified by sampling") {
    StabilizabilityCertificate c;
    c.shape = VdeltaShape::Quadratic;
    c.P = Matrix::Constant(1, 1, 0.25);
    c.K = Matrix::Constant(1, 1, std::sqrt(5.0 * 0.25));  // kappa_max = K^2/c_delta_l = 5
    c.rho = 0.5;
    c.c_delta_l = 0.25;
    c.c_delta_u = 0.25;
    c.delta_loc = 1.0;
    c.kappa_max = 5.0;
    ConstraintSet cs;
    LipschitzConstraint lc;
    lc.L = 2.0;
    // g with exact joint Lipschitz constant 2 in (x, u)
    lc.g = [](const Vector& x, const Vector& u) {
      return 2.0 * std::sqrt(x.squaredNorm() + u.squaredNorm()) - 1.0;
    };
    cs.items.push_back(lc);
    auto g = compute_constraint_gains(c, cs);
    CHECK(g[0] == doctest::Approx(6.0).epsilon(1e-12));

    // Sampled soundness of the bound: g_j increase <= c_j * c over V_delta <= c^2.
    Rng rng(21);
    double worst = 0.0;
    for (int s = 0; s < 10000; ++s) {
      const double cval = rng.uniform(0.0, 1.0);
      Vector z = vec({rng.uniform(-0.5, 0.5)});
      Vector v = vec({rng.uniform(-0.5, 0.5)});
      Vector x = z + sample_vdelta_ball(c, cval, rng);
      Vector u = c.kappa(x, z, v);
      const double incr = lc.g(x, u) - lc.g(z, v);
      if (cval > 1e-9) worst = std::max(worst, incr - g[0] * cval);
    }
    CHECK(worst <= 1e-9);
  }
  SUBCASE("quadrotor additive preset pins the gains at 1") {
    Json cfg = preset_config("quadrotor10_additive");
    DesignOutput d = run_design(cfg);
    double cmax = 0.0;
    for (double cj : d.design.gains) cmax = std::max(cmax, cj);
    CHECK(cmax == doctest::Approx(1.0));
  }
}

TEST_CASE("constraint gains, polytopic shape match vertex enumeration") {
  Rng rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    StabilizabilityCertificate c;
    c.shape = VdeltaShape::Polytopic;
    Matrix rows(4, 2);
    rows << 1, rng.uniform(-0.3, 0.3), -1, rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), 1,
        rng.uniform(-0.3, 0.3), -1;
    c.rows = rows;
    c.K = Matrix::Zero(1, 2);
    c.K << rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3);
    c.rho = 0.5;
    c.c_delta_l = 0.1;
    c.c_delta_u = 10.0;
    c.delta_loc = 1.0;
    c.kappa_max = 100.0;

    ConstraintSet cs;
    AffineConstraint a;
    a.Lx = vec({rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)});
    a.Lu = vec({rng.uniform(-1.0, 1.0)});
    cs.items.push_back(a);

    auto g = compute_constraint_gains(c, cs);
    double oracle = 0.0;
    for (const auto& v : polytope_vertices(rows)) {
      oracle = std::max(oracle, (a.Lx + c.K.transpose() * a.Lu).dot(v));
    }
    CHECK(g[0] == doctest::Approx(oracle).epsilon(1e-9));
  }
}

TEST_CASE("cost increase modulus") {
  StageCost cost;
  cost.Q = Matrix::Identity(1, 1);
  cost.R = Matrix::Identity(1, 1);
  cost.x_ref = Vector::Zero(1);
  cost.u_ref = Vector::Zero(1);
  const double D = 2.0;

  SUBCASE("zero deviation gives zero") {
    StabilizabilityCertificate c = quad_cert(1.0, 0.0, 0.5);
    KPoly au = cost_increase_modulus(c, cost, D);
    CHECK(au(0.0) == doctest::Approx(0.0));
  }
  SUBCASE("unit constants reproduce alpha_c") {
    StabilizabilityCertificate c = quad_cert(1.0, 0.0, 0.5);
    KPoly au = cost_increase_modulus(c, cost, D);
    // alpha_u(c) = c^2 + 2 D c
    CHECK(au.a[0] == doctest::Approx(2.0 * D));
    CHECK(au.a[1] == doctest::Approx(1.0));
  }
  SUBCASE("kappa_max = 3 doubles the argument") {
    StabilizabilityCertificate c = quad_cert(1.0, 0.0, 0.5);
    c.kappa_max = 3.0;  // sqrt(1/1 + 3) = 2
    c.K = Matrix::Zero(1, 1);
    KPoly au = cost_increase_modulus(c, cost, D);
    CHECK(au.a[0] == doctest::Approx(2.0 * 2.0 * D));
    CHECK(au.a[1] == doctest::Approx(4.0));
  }
}

TEST_CASE("ct-to-dt conversion") {
  CtCertificate ct;
  ct.base = quad_cert(1.0, 0.0, 0.5);
  SUBCASE("benchmark rate") {
    ct.rho_c = 0.192;
    StabilizabilityCertificate c = ct_to_dt(ct, 0.3);
    CHECK(c.rho == doctest::Approx(0.9441).epsilon(2e-4));
  }
  SUBCASE("direct exponential") {
    ct.rho_c = 0.4;
    StabilizabilityCertificate c = ct_to_dt(ct, 0.3);
    CHECK(c.rho == doctest::Approx(std::exp(-0.12)).epsilon(1e-12));
  }
  SUBCASE("vanishing step") {
    ct.rho_c = 0.4;
    StabilizabilityCertificate c = ct_to_dt(ct, 1e-12);
    CHECK(c.rho == doctest::Approx(1.0).epsilon(1e-9));
  }
  SUBCASE("power identity rho(h)^k = rho(k h)") {
    ct.rho_c = 0.37;
    const double h = 0.21;
    const int k = 5;
    StabilizabilityCertificate c1 = ct_to_dt(ct, h);
    StabilizabilityCertificate ck = ct_to_dt(ct, k * h);
    CHECK(std::pow(c1.rho, k) == doctest::Approx(ck.rho).epsilon(1e-12));
  }
  SUBCASE("invalid step rejected") {
    ct.rho_c = 0.4;
    CHECK_THROWS(ct_to_dt(ct, 0.0));
  }
}

TEST_CASE("certificate validation by sampling") {
  Matrix A(1, 1), B(1, 1);
  A << 0.9;
  B << 1.0;

  SUBCASE("lyapunov-consistent certificate passes") {
    // K = -0.5: A_K = 0.4; P = 1 satisfies A_K' P A_K = 0.16 P <= rho^2 P for rho = 0.5.
    NominalModel mdl = NominalModel::lti(A, B);
    StabilizabilityCertificate c = quad_cert(1.0, -0.5, 0.5);
    CertificateReport rep = validate_certificate(c, mdl, box1d(), 500, 3);
    CHECK(rep.samples > 0);
    CHECK(!rep.violated);
    CHECK(rep.worst_ratio <= 0.4 + 1e-9);
  }
  SUBCASE("destabilizing feedback flagged") {
    NominalModel mdl = NominalModel::lti(A, B);
    StabilizabilityCertificate c = quad_cert(1.0, 0.3, 0.9);  // A_K = 1.2
    CertificateReport rep = validate_certificate(c, mdl, box1d(), 500, 3);
    CHECK(rep.violated);
  }
  SUBCASE("zero samples give an empty report") {
    NominalModel mdl = NominalModel::lti(A, B);
    StabilizabilityCertificate c = quad_cert(1.0, -0.5, 0.5);
    CertificateReport rep = validate_certificate(c, mdl, box1d(), 0, 3);
    CHECK(rep.samples == 0);
    CHECK(!rep.violated);
  }
}

TEST_CASE("kappa deviation bound holds by construction for quadratic shapes") {
  Rng rng(41);
  StabilizabilityCertificate c;
  c.shape = VdeltaShape::Quadratic;
  Matrix P(2, 2);
  P << 2.0, 0.3, 0.3, 1.0;
  c.P = P;
  c.K = Matrix::Zero(1, 2);
  c.K << -0.4, 0.2;
  c.rho = 0.5;
  Eigen::SelfAdjointEigenSolver<Matrix> es(P, Eigen::EigenvaluesOnly);
  c.c_delta_l = es.eigenvalues().minCoeff();
  c.c_delta_u = es.eigenvalues().maxCoeff();
  c.delta_loc = 1.0;
  Eigen::JacobiSVD<Matrix> svd(c.K);
  c.kappa_max = std::pow(svd.singularValues()[0], 2) / c.c_delta_l;
  c.validate();
  for (int s = 0; s < 1000; ++s) {
    Vector z = vec({rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)});
    Vector v = vec({rng.uniform(-1.0, 1.0)});
    Vector x = z + sample_vdelta_ball(c, rng.uniform(0.0, 1.0), rng);
    const double lhs = (c.kappa(x, z, v) - v).squaredNorm();
    CHECK(lhs <= c.kappa_max * c.vdelta(x, z) + 1e-12);
  }
}
