#include <doctest.h>

#include "tubempc/config.hpp"
#include "tubempc/model.hpp"

using namespace tubempc;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<int>(v.size()));
  int i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

ConstraintSet box1d(double xb, double ub) {
  ConstraintSet cs;
  for (double s : {1.0, -1.0}) {
    AffineConstraint a;
    a.Lx = vec({s / xb});
    a.Lu = vec({0.0});
    cs.items.push_back(a);
    AffineConstraint b;
    b.Lx = vec({0.0});
    b.Lu = vec({s / ub});
    cs.items.push_back(b);
  }
  return cs;
}

}  // namespace

TEST_CASE("dynamics evaluation") {
  Matrix A(1, 1), B(1, 1);
  A << 0.5;
  B << 1.0;
  NominalModel mdl = NominalModel::lti(A, B);

  SUBCASE("scalar linear map") {
    CHECK(eval_dynamics(mdl, vec({2.0}), vec({0.0}))[0] == doctest::Approx(1.0));
  }
  SUBCASE("equilibrium at the origin") {
    CHECK(eval_dynamics(mdl, vec({0.0}), vec({0.0}))[0] == doctest::Approx(0.0));
  }
  SUBCASE("dimension mismatch rejected") {
    CHECK_THROWS_AS(eval_dynamics(mdl, vec({0.0, 1.0}), vec({0.0})), DimensionError);
  }
  SUBCASE("non-finite output flagged") {
    NominalModel bad = NominalModel::discrete(1, 1, [](const Vector& x, const Vector&) {
      return Vector(vec({1.0 / (x[0] - 1.0)}));
    });
    CHECK_THROWS_AS(bad.step(vec({1.0}), vec({0.0})), NumericalError);
  }
}

TEST_CASE("quadrotor hover is an equilibrium of the wrapped model") {
  Vector x_ref = Vector::Zero(10);
  x_ref[0] = 3.0;
  x_ref[1] = 3.0;
  x_ref[2] = 10.0;
  Vector u_ref = Vector::Zero(3);
  u_ref[2] = 9.8 / 0.91;
  NominalModel quad = registry_model("quadrotor10", 0.3, x_ref, u_ref);
  // The deviation-coordinate rhs at the reference is the raw rhs at hover.
  Vector deriv = quad.f(Vector::Zero(10), Vector::Zero(3));
  CHECK(deriv.cwiseAbs().maxCoeff() < 1e-12);
  // One RK4 step from the equilibrium stays put.
  Vector next = quad.step(Vector::Zero(10), Vector::Zero(3));
  CHECK(next.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("rk4 sub-stepping shows fourth-order convergence on the quadrotor field") {
  Vector x_ref = Vector::Zero(10);
  x_ref[0] = 3.0;
  x_ref[1] = 3.0;
  x_ref[2] = 10.0;
  Vector u_ref = Vector::Zero(3);
  u_ref[2] = 9.8 / 0.91;
  NominalModel quad = registry_model("quadrotor10", 0.3, x_ref, u_ref);

  Vector x0 = Vector::Zero(10);
  x0[2] = -1.0;
  x0[6] = 0.2;
  x0[7] = 0.1;
  Vector u = vec({0.05, -0.02, 0.3});

  auto integrate = [&](double dt, int steps) {
    Vector x = x0;
    for (int i = 0; i < steps; ++i) x = quad.rk4_step(x, u, dt);
    return x;
  };
  const double h = 0.05;  // small enough for the leading error term to dominate
  Vector ref = integrate(h / 64.0, 64);
  const double e1 = (integrate(h, 1) - ref).norm();
  const double e2 = (integrate(h / 2.0, 2) - ref).norm();
  const double ratio = e1 / e2;  // fourth order halving gives ~16
  CHECK(ratio > 11.0);
  CHECK(ratio < 26.0);
}

TEST_CASE("jacobians match central finite differences at random points") {
  Vector x_ref = Vector::Zero(10);
  x_ref[0] = 3.0;
  x_ref[1] = 3.0;
  x_ref[2] = 10.0;
  Vector u_ref = Vector::Zero(3);
  u_ref[2] = 9.8 / 0.91;
  NominalModel quad = registry_model("quadrotor10", 0.3, x_ref, u_ref);
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    Vector x(10), u(3);
    for (int i = 0; i < 10; ++i) x[i] = rng.uniform(-0.3, 0.3);
    for (int i = 0; i < 3; ++i) u[i] = rng.uniform(-0.2, 0.2);
    const Matrix Jx = quad.step_jac_x(x, u);
    // Independent check at a different step size.
    const double eps = 3e-6;
    Matrix Jfd(10, 10);
    for (int j = 0; j < 10; ++j) {
      Vector xp = x, xm = x;
      xp[j] += eps;
      xm[j] -= eps;
      Jfd.col(j) = (quad.step(xp, u) - quad.step(xm, u)) / (2.0 * eps);
    }
    CHECK((Jx - Jfd).cwiseAbs().maxCoeff() < 1e-5 * (1.0 + Jfd.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("constraint evaluation") {
  SUBCASE("raw affine row and the normalized version") {
    ConstraintSet cs;
    AffineConstraint raw;
    raw.Lx = vec({1.0});
    raw.Lu = vec({0.0});
    cs.items.push_back(raw);
    AffineConstraint normalized;
    normalized.Lx = vec({0.25});
    normalized.Lu = vec({0.0});
    cs.items.push_back(normalized);
    CHECK(eval_constraint(cs, 0, vec({4.0}), vec({0.0})) == doctest::Approx(3.0));
    CHECK(eval_constraint(cs, 1, vec({4.0}), vec({0.0})) == doctest::Approx(0.0));
    CHECK(eval_constraint(cs, 1, vec({0.0}), vec({0.0})) == doctest::Approx(-1.0));
    CHECK_THROWS(eval_constraint(cs, 2, vec({0.0}), vec({0.0})));
  }
  SUBCASE("hoelder boundary") {
    ConstraintSet cs;
    HoelderConstraint hc;
    hc.g = [](const Vector& x, const Vector&) { return x.squaredNorm() - 1.0; };
    hc.c_tilde = 1.0;
    hc.lambda = 1.0;
    cs.items.push_back(hc);
    CHECK(eval_constraint(cs, 0, vec({1.0}), vec({0.0})) == doctest::Approx(0.0));
  }
  SUBCASE("lipschitz constant accessor") {
    ConstraintSet cs;
    AffineConstraint a;
    a.Lx = vec({3.0});
    a.Lu = vec({4.0});
    cs.items.push_back(a);
    CHECK(constraint_lipschitz(cs, 0) == doctest::Approx(5.0));
  }
}

TEST_CASE("bounding box and set radius from affine rows") {
  ConstraintSet cs = box1d(2.0, 1.0);
  BoxBounds box = affine_bounding_box(cs, 1, 1);
  CHECK(box.lo[0] == doctest::Approx(-2.0).epsilon(1e-8));
  CHECK(box.hi[0] == doctest::Approx(2.0).epsilon(1e-8));
  CHECK(box.lo[1] == doctest::Approx(-1.0).epsilon(1e-8));
  CHECK(set_radius(cs, 1, 1) == doctest::Approx(std::sqrt(5.0)).epsilon(1e-8));
}

TEST_CASE("stage cost moduli") {
  StageCost cost;
  cost.Q = Matrix::Identity(1, 1);
  cost.R = Matrix::Identity(1, 1);
  cost.x_ref = Vector::Zero(1);
  cost.u_ref = Vector::Zero(1);
  cost.validate();
  CHECK(cost.lambda_min_joint() == doctest::Approx(1.0));
  KPoly ac = cost.alpha_c(2.0);  // r^2 + 4r
  CHECK(ac(1.0) == doctest::Approx(5.0));
  CHECK(cost.alpha_l_inverse(4.0) == doctest::Approx(2.0));

  StageCost bad = cost;
  bad.Q = Matrix::Zero(1, 1);
  CHECK_THROWS(bad.validate());
}

TEST_CASE("worst-case mismatch sampling") {
  SUBCASE("zero-radius ball") {
    AdditiveBall ball;
    ball.E = Matrix::Identity(2, 2);
    ball.radius = 0.0;
    UncertaintyModel um = ball;
    Vector d = sample_worstcase_mismatch(um, Vector::Zero(2), Vector::Zero(1), vec({1.0, 0.0}));
    CHECK(d.norm() == doctest::Approx(0.0));
  }
  SUBCASE("unit ball support point") {
    AdditiveBall ball;
    ball.E = Matrix::Identity(2, 2);
    ball.radius = 1.0;
    UncertaintyModel um = ball;
    Vector d = sample_worstcase_mismatch(um, Vector::Zero(2), Vector::Zero(1), vec({1.0, 0.0}));
    CHECK(d[0] == doctest::Approx(1.0));
    CHECK(d[1] == doctest::Approx(0.0));
  }
  SUBCASE("scalar lpv vertex enumeration") {
    LpvUncertainty u;
    u.A = {Matrix::Constant(1, 1, 0.1)};
    u.B = {Matrix::Zero(1, 1)};
    u.theta_vertices = {vec({1.0}), vec({-1.0})};
    UncertaintyModel um = u;
    Vector d = sample_worstcase_mismatch(um, vec({2.0}), vec({0.0}), vec({1.0}));
    CHECK(d[0] == doctest::Approx(0.2));
  }
  SUBCASE("zero direction breaks ties to the first vertex") {
    LpvUncertainty u;
    u.A = {Matrix::Constant(1, 1, 0.1)};
    u.B = {Matrix::Zero(1, 1)};
    u.theta_vertices = {vec({1.0}), vec({-1.0})};
    UncertaintyModel um = u;
    Vector d = sample_worstcase_mismatch(um, vec({2.0}), vec({0.0}), vec({0.0}));
    CHECK(d[0] == doctest::Approx(0.2));  // first vertex theta = +1
  }
}

TEST_CASE("mismatch samples stay inside the declared set") {
  Rng rng(9);
  LpvUncertainty u;
  Matrix A1(2, 2);
  A1 << 0.05, 0.0, 0.0, 0.05;
  u.A = {A1};
  u.B = {Matrix::Zero(2, 1)};
  u.theta_vertices = {vec({1.0}), vec({-1.0})};
  u.E = Matrix::Identity(2, 2);
  u.d_vertices = {vec({0.02, 0.02}), vec({0.02, -0.02}), vec({-0.02, 0.02}),
                  vec({-0.02, -0.02})};
  UncertaintyModel um = u;
  for (int trial = 0; trial < 200; ++trial) {
    Vector x = vec({rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)});
    Vector uin = vec({rng.uniform(-1.0, 1.0)});
    Vector dir = rng.unit_vector(2);
    Vector dw = sample_worstcase_mismatch(um, x, uin, dir);
    // d_w = theta*A1*x + d with |theta| <= 1, |d_i| <= 0.02; membership check by
    // brute force over the vertex grid.
    bool inside = false;
    for (double th : {1.0, -1.0}) {
      Vector base = th * (A1 * x);
      Vector resid = dw - base;
      if (resid.cwiseAbs().maxCoeff() <= 0.02 + 1e-12) inside = true;
    }
    CHECK(inside);
  }

  AdditiveBall ball;
  ball.E = Matrix::Identity(2, 2);
  ball.radius = 0.7;
  UncertaintyModel umb = ball;
  for (int trial = 0; trial < 100; ++trial) {
    Vector dir = rng.unit_vector(2);
    Vector dw = sample_worstcase_mismatch(umb, Vector::Zero(2), Vector::Zero(1), dir);
    CHECK(dw.norm() <= 0.7 + 1e-12);
  }
}
