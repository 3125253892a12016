#include "tubempc/model.hpp"

#include <cmath>

#include "tubempc/solvers.hpp"

namespace tubempc {

namespace {

void check_xu(const NominalModel& mdl, const Vector& x, const Vector& u) {
  require_dims(x.size() == mdl.n, "model: state dimension mismatch (" +
                                      std::to_string(x.size()) + " vs " +
                                      std::to_string(mdl.n) + ")");
  require_dims(u.size() == mdl.m, "model: input dimension mismatch (" +
                                      std::to_string(u.size()) + " vs " +
                                      std::to_string(mdl.m) + ")");
}

double fd_step(const Vector& x) { return std::max(1e-6, 1e-8 * x.norm()); }

}  // namespace

NominalModel NominalModel::lti(const Matrix& A, const Matrix& B) {
  require_dims(A.rows() == A.cols() && B.rows() == A.rows(), "lti: A square, B rows match");
  NominalModel mdl;
  mdl.n = static_cast<int>(A.rows());
  mdl.m = static_cast<int>(B.cols());
  mdl.kind = ModelKind::DiscreteMap;
  mdl.linear = true;
  mdl.A = A;
  mdl.B = B;
  mdl.f = [A, B](const Vector& x, const Vector& u) -> Vector { return A * x + B * u; };
  mdl.jac_x = [A](const Vector&, const Vector&) { return A; };
  mdl.jac_u = [B](const Vector&, const Vector&) { return B; };
  return mdl;
}

NominalModel NominalModel::discrete(int n, int m,
                                    std::function<Vector(const Vector&, const Vector&)> f) {
  NominalModel mdl;
  mdl.n = n;
  mdl.m = m;
  mdl.kind = ModelKind::DiscreteMap;
  mdl.f = std::move(f);
  return mdl;
}

NominalModel NominalModel::continuous(int n, int m, double h,
                                      std::function<Vector(const Vector&, const Vector&)> rhs) {
  require(h > 0.0, "model: continuous kind needs a positive step size");
  NominalModel mdl;
  mdl.n = n;
  mdl.m = m;
  mdl.kind = ModelKind::ContinuousRhs;
  mdl.h = h;
  mdl.f = std::move(rhs);
  return mdl;
}

Vector NominalModel::rk4_step(const Vector& x, const Vector& u, double dt) const {
  const Vector k1 = f(x, u);
  const Vector k2 = f(x + 0.5 * dt * k1, u);
  const Vector k3 = f(x + 0.5 * dt * k2, u);
  const Vector k4 = f(x + dt * k3, u);
  return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

Vector NominalModel::step(const Vector& x, const Vector& u) const {
  check_xu(*this, x, u);
  Vector out = (kind == ModelKind::DiscreteMap) ? f(x, u) : rk4_step(x, u, h);
  for (int i = 0; i < out.size(); ++i) {
    if (!std::isfinite(out[i]))
      throw NumericalError("model: non-finite dynamics output at index " + std::to_string(i));
  }
  return out;
}

Matrix NominalModel::step_jac_x(const Vector& x, const Vector& u) const {
  check_xu(*this, x, u);
  if (kind == ModelKind::DiscreteMap && jac_x) return jac_x(x, u);
  const double eps = fd_step(x);
  Matrix J(n, n);
  Vector xp = x, xm = x;
  for (int j = 0; j < n; ++j) {
    xp[j] += eps;
    xm[j] -= eps;
    Vector fp = (kind == ModelKind::DiscreteMap) ? f(xp, u) : rk4_step(xp, u, h);
    Vector fm = (kind == ModelKind::DiscreteMap) ? f(xm, u) : rk4_step(xm, u, h);
    J.col(j) = (fp - fm) / (2.0 * eps);
    xp[j] = x[j];
    xm[j] = x[j];
  }
  return J;
}

Matrix NominalModel::step_jac_u(const Vector& x, const Vector& u) const {
  check_xu(*this, x, u);
  if (kind == ModelKind::DiscreteMap && jac_u) return jac_u(x, u);
  const double eps = fd_step(u);
  Matrix J(n, m);
  Vector up = u, um = u;
  for (int j = 0; j < m; ++j) {
    up[j] += eps;
    um[j] -= eps;
    Vector fp = (kind == ModelKind::DiscreteMap) ? f(x, up) : rk4_step(x, up, h);
    Vector fm = (kind == ModelKind::DiscreteMap) ? f(x, um) : rk4_step(x, um, h);
    J.col(j) = (fp - fm) / (2.0 * eps);
    up[j] = u[j];
    um[j] = u[j];
  }
  return J;
}

Vector eval_dynamics(const NominalModel& model, const Vector& x, const Vector& u) {
  return model.step(x, u);
}

// --- Constraints -------------------------------------------------------------

bool ConstraintSet::all_affine_tightened() const {
  for (const auto& c : items)
    if (std::holds_alternative<LipschitzConstraint>(c)) return false;
  return true;
}

std::vector<int> ConstraintSet::tightened_indices() const {
  std::vector<int> idx;
  for (int j = 0; j < size(); ++j)
    if (!std::holds_alternative<HoelderConstraint>(items[j])) idx.push_back(j);
  return idx;
}

std::vector<int> ConstraintSet::hoelder_indices() const {
  std::vector<int> idx;
  for (int j = 0; j < size(); ++j)
    if (std::holds_alternative<HoelderConstraint>(items[j])) idx.push_back(j);
  return idx;
}

void ConstraintSet::validate() const {
  for (const auto& c : items) {
    if (const auto* l = std::get_if<LipschitzConstraint>(&c)) {
      require(l->L >= 0.0, "constraints: Lipschitz constant must be >= 0");
      require(static_cast<bool>(l->g), "constraints: missing evaluator");
    } else if (const auto* hc = std::get_if<HoelderConstraint>(&c)) {
      require(hc->c_tilde >= 0.0, "constraints: Hoelder coefficient must be >= 0");
      require(hc->lambda > 0.0, "constraints: Hoelder exponent must be > 0");
      require(static_cast<bool>(hc->g), "constraints: missing evaluator");
    }
  }
}

double eval_constraint(const ConstraintSet& cs, int j, const Vector& x, const Vector& u) {
  require(j >= 0 && j < cs.size(), "constraints: index out of range");
  const auto& c = cs.items[j];
  if (const auto* a = std::get_if<AffineConstraint>(&c)) {
    require_dims(a->Lx.size() == x.size() && a->Lu.size() == u.size(),
                 "constraints: affine row dimension mismatch");
    return a->Lx.dot(x) + a->Lu.dot(u) - 1.0;
  }
  if (const auto* l = std::get_if<LipschitzConstraint>(&c)) return l->g(x, u);
  return std::get<HoelderConstraint>(c).g(x, u);
}

double constraint_lipschitz(const ConstraintSet& cs, int j) {
  require(j >= 0 && j < cs.size(), "constraints: index out of range");
  const auto& c = cs.items[j];
  if (const auto* a = std::get_if<AffineConstraint>(&c)) {
    Vector stacked(a->Lx.size() + a->Lu.size());
    stacked << a->Lx, a->Lu;
    return stacked.norm();
  }
  if (const auto* l = std::get_if<LipschitzConstraint>(&c)) return l->L;
  throw Error("constraints: Hoelder rows have no Lipschitz constant");
}

BoxBounds affine_bounding_box(const ConstraintSet& cs, int n, int m) {
  std::vector<const AffineConstraint*> rows;
  for (const auto& c : cs.items)
    if (const auto* a = std::get_if<AffineConstraint>(&c)) rows.push_back(a);
  require(!rows.empty(), "constraints: no affine rows to bound the set");

  const int d = n + m;
  Matrix A(static_cast<int>(rows.size()), d);
  for (size_t i = 0; i < rows.size(); ++i) {
    A.row(static_cast<int>(i)).head(n) = rows[i]->Lx.transpose();
    A.row(static_cast<int>(i)).tail(m) = rows[i]->Lu.transpose();
  }
  Vector b = Vector::Ones(static_cast<int>(rows.size()));

  BoxBounds box;
  box.lo = Vector::Constant(d, -kInf);
  box.hi = Vector::Constant(d, kInf);
  for (int j = 0; j < d; ++j) {
    for (int sign : {+1, -1}) {
      LpProblem lp;
      lp.c = Vector::Zero(d);
      lp.c[j] = -sign;  // maximize sign * e_j
      lp.A_ub = A;
      lp.b_ub = b;
      auto [x, st] = solve_lp(lp, 1e-10);
      if (st.optimal()) {
        (sign > 0 ? box.hi[j] : box.lo[j]) = x[j];
      }
      // Unbounded faces are left infinite.
    }
  }
  return box;
}

double set_radius(const ConstraintSet& cs, int n, int m) {
  BoxBounds box = affine_bounding_box(cs, n, m);
  double r2 = 0.0;
  for (int j = 0; j < box.lo.size(); ++j) {
    const double a = std::isfinite(box.lo[j]) ? std::abs(box.lo[j]) : kInf;
    const double b = std::isfinite(box.hi[j]) ? std::abs(box.hi[j]) : kInf;
    const double v = std::max(a, b);
    if (!std::isfinite(v)) throw DesignError("constraints: set unbounded, cannot take radius");
    r2 += v * v;
  }
  return std::sqrt(r2);
}

// --- Stage cost ---------------------------------------------------------------

double StageCost::lambda_min_joint() const {
  Eigen::SelfAdjointEigenSolver<Matrix> eq(Q, Eigen::EigenvaluesOnly);
  Eigen::SelfAdjointEigenSolver<Matrix> er(R, Eigen::EigenvaluesOnly);
  return std::min(eq.eigenvalues().minCoeff(), er.eigenvalues().minCoeff());
}

double StageCost::lambda_max_joint() const {
  Eigen::SelfAdjointEigenSolver<Matrix> eq(Q, Eigen::EigenvaluesOnly);
  Eigen::SelfAdjointEigenSolver<Matrix> er(R, Eigen::EigenvaluesOnly);
  return std::max(eq.eigenvalues().maxCoeff(), er.eigenvalues().maxCoeff());
}

void StageCost::validate() const {
  require_dims(Q.rows() == Q.cols() && R.rows() == R.cols(), "cost: Q, R must be square");
  const double s = 1.0 + std::max(Q.cwiseAbs().maxCoeff(), R.cwiseAbs().maxCoeff());
  require((Q - Q.transpose()).cwiseAbs().maxCoeff() < 1e-10 * s, "cost: Q not symmetric");
  require((R - R.transpose()).cwiseAbs().maxCoeff() < 1e-10 * s, "cost: R not symmetric");
  require(lambda_min_joint() > 0.0, "cost: Q and R must be positive definite");
}

double StageCost::alpha_l_inverse(double v) const {
  return std::sqrt(std::max(v, 0.0) / lambda_min_joint());
}

KPoly StageCost::alpha_c(double D) const {
  const double lmax = lambda_max_joint();
  return KPoly{{2.0 * lmax * D, lmax}};
}

// --- Uncertainty ---------------------------------------------------------------

Matrix LpvUncertainty::A_at(const Vector& theta) const {
  Matrix M = Matrix::Zero(A[0].rows(), A[0].cols());
  for (size_t i = 0; i < A.size(); ++i) M += theta[static_cast<int>(i)] * A[i];
  return M;
}

Matrix LpvUncertainty::B_at(const Vector& theta) const {
  Matrix M = Matrix::Zero(B[0].rows(), B[0].cols());
  for (size_t i = 0; i < B.size(); ++i) M += theta[static_cast<int>(i)] * B[i];
  return M;
}

Vector LpvUncertainty::offset_at(const Vector& theta) const {
  Vector off = Vector::Zero(A[0].rows());
  if (x_ref.size()) off += A_at(theta) * x_ref;
  if (u_ref.size()) off += B_at(theta) * u_ref;
  return off;
}

void validate_uncertainty(const UncertaintyModel& um, int n, int m) {
  if (const auto* ball = std::get_if<AdditiveBall>(&um)) {
    require(ball->radius >= 0.0, "uncertainty: ball radius must be >= 0");
    require_dims(ball->E.rows() == n, "uncertainty: E row count mismatch");
  } else if (const auto* lpv = std::get_if<LpvUncertainty>(&um)) {
    require(!lpv->theta_vertices.empty(), "uncertainty: LPV needs parameter vertices");
    require(!lpv->A.empty() && lpv->A.size() == lpv->B.size(),
            "uncertainty: LPV needs matching A_i/B_i lists");
    for (const auto& Ai : lpv->A)
      require_dims(Ai.rows() == n && Ai.cols() == n, "uncertainty: A_i size");
    for (const auto& Bi : lpv->B)
      require_dims(Bi.rows() == n && Bi.cols() == m, "uncertainty: B_i size");
    const int q = static_cast<int>(lpv->A.size());
    for (const auto& th : lpv->theta_vertices)
      require_dims(th.size() == q, "uncertainty: theta vertex size");
    if (lpv->E.size()) {
      require_dims(lpv->E.rows() == n, "uncertainty: E row count mismatch");
      for (const auto& d : lpv->d_vertices)
        require_dims(d.size() == lpv->E.cols(), "uncertainty: d vertex size");
    }
  } else {
    const auto& c = std::get<CustomBound>(um);
    require(static_cast<bool>(c.w_hat), "uncertainty: custom bound needs an evaluator");
    require(c.L >= 0.0, "uncertainty: custom Lipschitz constant must be >= 0");
  }
}

Vector sample_worstcase_mismatch(const UncertaintyModel& um, const Vector& x, const Vector& u,
                                 const Vector& direction) {
  const int n = static_cast<int>(x.size());
  require_dims(direction.size() == n, "uncertainty: direction dimension mismatch");

  if (const auto* ball = std::get_if<AdditiveBall>(&um)) {
    if (ball->radius == 0.0 || ball->E.size() == 0) return Vector::Zero(n);
    Vector dir_d = ball->E.transpose() * direction;
    const double nrm = dir_d.norm();
    if (nrm < 1e-14) return Vector::Zero(n);  // tie-break: zero for a ball
    return ball->E * (ball->radius / nrm * dir_d);
  }

  if (const auto* lpv = std::get_if<LpvUncertainty>(&um)) {
    require_dims(u.size() == lpv->B[0].cols(), "uncertainty: input dimension mismatch");
    Vector best;
    double best_val = -kInf;
    std::vector<Vector> dverts = lpv->d_vertices;
    if (lpv->E.size() == 0 || dverts.empty()) dverts = {Vector::Zero(0)};
    for (const auto& th : lpv->theta_vertices) {
      Vector base = lpv->A_at(th) * x + lpv->B_at(th) * u + lpv->offset_at(th);
      for (const auto& d : dverts) {
        Vector cand = base;
        if (d.size()) cand += lpv->E * d;
        const double val = direction.dot(cand);
        if (best.size() == 0 || val > best_val) {
          best_val = val;
          best = cand;
        }
      }
    }
    return best;  // first vertex wins ties (zero direction included)
  }

  const auto& c = std::get<CustomBound>(um);
  const double r = c.w_hat(x, u);
  const double nrm = direction.norm();
  if (nrm < 1e-14 || r <= 0.0) return Vector::Zero(n);
  return (r / nrm) * direction;
}

}  // namespace tubempc
