#include "tubempc/certificate.hpp"

#include <algorithm>
#include <cmath>

#include "tubempc/solvers.hpp"

namespace tubempc {

double StabilizabilityCertificate::sqrt_vdelta(const Vector& x, const Vector& z) const {
  const Vector d = x - z;
  if (shape == VdeltaShape::Quadratic) return std::sqrt(std::max(d.dot(P * d), 0.0));
  double g = 0.0;
  for (int i = 0; i < rows.rows(); ++i) g = std::max(g, rows.row(i).dot(d));
  return g;
}

void StabilizabilityCertificate::validate() const {
  require(rho > 0.0 && rho < 1.0, "certificate: rho must lie in (0,1)");
  require(c_delta_l > 0.0 && c_delta_l <= c_delta_u, "certificate: 0 < c_delta_l <= c_delta_u");
  require(delta_loc > 0.0, "certificate: delta_loc must be positive");
  if (shape == VdeltaShape::Quadratic) {
    require_dims(P.rows() == P.cols() && P.rows() > 0, "certificate: P must be square");
    Eigen::SelfAdjointEigenSolver<Matrix> es(P, Eigen::EigenvaluesOnly);
    const double lmin = es.eigenvalues().minCoeff();
    const double lmax = es.eigenvalues().maxCoeff();
    require(lmin > 0.0, "certificate: P must be positive definite");
    require(c_delta_l <= lmin * (1.0 + 1e-9),
            "certificate: c_delta_l exceeds lambda_min(P)");
    require(c_delta_u >= lmax * (1.0 - 1e-9),
            "certificate: c_delta_u below lambda_max(P)");
  } else {
    require_dims(rows.rows() > 0 && rows.cols() > 0, "certificate: polytope rows required");
  }
  if (K.size()) {
    const double k2 = K.squaredNorm() > 0.0
                          ? Eigen::JacobiSVD<Matrix>(K).singularValues()[0]
                          : 0.0;
    require(kappa_max >= k2 * k2 / c_delta_l - 1e-9,
            "certificate: kappa_max below ||K||^2 / c_delta_l");
  }
}

StabilizabilityCertificate ct_to_dt(const CtCertificate& ct, double h) {
  require(h > 0.0, "ct_to_dt: step size must be positive");
  require(ct.rho_c > 0.0, "ct_to_dt: continuous rate must be positive");
  StabilizabilityCertificate out = ct.base;
  out.rho = std::exp(-ct.rho_c * h);
  return out;
}

double contraction_rate_polytopic(const Matrix& A_K, const Matrix& rows, bool* not_contractive) {
  require_dims(A_K.rows() == A_K.cols() && A_K.cols() == rows.cols(),
               "contraction: dimension mismatch");
  const int r = static_cast<int>(rows.rows());
  const int n = static_cast<int>(rows.cols());
  // Boundedness precheck: every coordinate direction must have a finite max.
  for (int j = 0; j < n; ++j) {
    for (int sign : {+1, -1}) {
      LpProblem lp;
      lp.c = Vector::Zero(n);
      lp.c[j] = -sign;
      lp.A_ub = rows;
      lp.b_ub = Vector::Ones(r);
      auto [x, st] = solve_lp(lp, 1e-10);
      if (st.unbounded) throw DesignError("contraction: polytope is unbounded");
    }
  }
  double rho = 0.0;
  for (int i = 0; i < r; ++i) {
    LpProblem lp;
    lp.c = -(rows.row(i) * A_K).transpose();  // maximize P_i A_K x
    lp.A_ub = rows;
    lp.b_ub = Vector::Ones(r);
    auto [x, st] = solve_lp(lp, 1e-10);
    if (!st.optimal()) {
      if (st.unbounded) throw DesignError("contraction: polytope is unbounded");
      throw NumericalError("contraction: LP failed (" + std::string(to_string(st.outcome)) + ")");
    }
    rho = std::max(rho, (rows.row(i) * A_K).dot(x));
  }
  (void)n;
  if (not_contractive) *not_contractive = rho >= 1.0;
  rho = std::max(rho, 0.0);
  return rho;
}

std::vector<double> compute_constraint_gains(const StabilizabilityCertificate& cert,
                                             const ConstraintSet& cs) {
  std::vector<double> gains;
  const auto idx = cs.tightened_indices();
  gains.reserve(idx.size());

  if (cert.shape == VdeltaShape::Quadratic) {
    const double factor = std::sqrt(1.0 / cert.c_delta_l + cert.kappa_max);
    for (int j : idx) gains.push_back(constraint_lipschitz(cs, j) * factor);
    return gains;
  }

  // Polytopic shape: one LP per affine row over the gauge unit ball.
  const int r = static_cast<int>(cert.rows.rows());
  for (int j : idx) {
    const auto* a = std::get_if<AffineConstraint>(&cs.items[j]);
    require(a != nullptr, "gains: polytopic certificates need affine constraints");
    Vector row = a->Lx + cert.K.transpose() * a->Lu;  // (L_x + L_u K) x
    LpProblem lp;
    lp.c = -row;
    lp.A_ub = cert.rows;
    lp.b_ub = Vector::Ones(r);
    auto [x, st] = solve_lp(lp, 1e-10);
    if (!st.optimal()) throw NumericalError("gains: LP failed");
    gains.push_back(std::max(row.dot(x), 0.0));
  }
  return gains;
}

KPoly cost_increase_modulus(const StabilizabilityCertificate& cert, const StageCost& cost,
                            double set_radius) {
  const double factor = std::sqrt(1.0 / cert.c_delta_l + cert.kappa_max);
  return cost.alpha_c(set_radius).scale_argument(factor);
}

std::vector<Vector> polytope_vertices(const Matrix& rows) {
  const int r = static_cast<int>(rows.rows());
  const int n = static_cast<int>(rows.cols());
  require(n <= 4, "polytope_vertices: exact enumeration limited to n <= 4");
  std::vector<Vector> verts;
  std::vector<int> pick(n);
  std::function<void(int, int)> rec = [&](int start, int depth) {
    if (depth == n) {
      Matrix A(n, n);
      for (int i = 0; i < n; ++i) A.row(i) = rows.row(pick[i]);
      Eigen::FullPivLU<Matrix> lu(A);
      if (!lu.isInvertible()) return;
      Vector v = lu.solve(Vector::Ones(n));
      for (int i = 0; i < r; ++i)
        if (rows.row(i).dot(v) > 1.0 + 1e-9) return;
      for (const auto& w : verts)
        if ((w - v).norm() < 1e-9) return;
      verts.push_back(v);
      return;
    }
    for (int i = start; i < r; ++i) {
      pick[depth] = i;
      rec(i + 1, depth + 1);
    }
  };
  rec(0, 0);
  return verts;
}

Vector sample_vdelta_ball(const StabilizabilityCertificate& cert, double radius, Rng& rng) {
  const int n = cert.state_dim();
  if (cert.shape == VdeltaShape::Quadratic) {
    // x = P^{-1/2} y with ||y|| <= radius.
    Eigen::SelfAdjointEigenSolver<Matrix> es(cert.P);
    Matrix Pinv_sqrt = es.operatorInverseSqrt();
    Vector y = rng.unit_vector(n) * radius * std::pow(rng.uniform(), 1.0 / n);
    return Pinv_sqrt * y;
  }
  // Rejection sampling from the bounding box of the scaled gauge ball.
  BoxBounds box;
  box.lo = Vector::Constant(n, -kInf);
  box.hi = Vector::Constant(n, kInf);
  const int r = static_cast<int>(cert.rows.rows());
  for (int j = 0; j < n; ++j) {
    for (int sign : {+1, -1}) {
      LpProblem lp;
      lp.c = Vector::Zero(n);
      lp.c[j] = -sign;
      lp.A_ub = cert.rows;
      lp.b_ub = Vector::Ones(r);
      auto [x, st] = solve_lp(lp, 1e-10);
      require(st.optimal(), "sample_vdelta_ball: gauge ball must be bounded");
      (sign > 0 ? box.hi[j] : box.lo[j]) = x[j] * radius;
    }
  }
  for (int attempts = 0; attempts < 10000; ++attempts) {
    Vector x(n);
    for (int j = 0; j < n; ++j) x[j] = rng.uniform(box.lo[j], box.hi[j]);
    double g = 0.0;
    for (int i = 0; i < r; ++i) g = std::max(g, cert.rows.row(i).dot(x));
    if (g <= radius) return x;
  }
  return Vector::Zero(n);
}

CertificateReport validate_certificate(const StabilizabilityCertificate& cert,
                                       const NominalModel& model, const ConstraintSet& cs,
                                       int samples, uint64_t seed) {
  CertificateReport rep;
  if (samples <= 0) return rep;
  Rng rng(seed);
  BoxBounds box = affine_bounding_box(cs, model.n, model.m);
  for (int j = 0; j < box.lo.size(); ++j) {
    if (!std::isfinite(box.lo[j])) box.lo[j] = -1.0;
    if (!std::isfinite(box.hi[j])) box.hi[j] = 1.0;
  }

  for (int s = 0; s < samples; ++s) {
    Vector z(model.n), v(model.m);
    bool inside = false;
    for (int tries = 0; tries < 200 && !inside; ++tries) {
      for (int j = 0; j < model.n; ++j) z[j] = rng.uniform(box.lo[j], box.hi[j]);
      for (int j = 0; j < model.m; ++j) v[j] = rng.uniform(box.lo[model.n + j], box.hi[model.n + j]);
      inside = true;
      for (int j : cs.tightened_indices())
        if (eval_constraint(cs, j, z, v) > 0.0) inside = false;
    }
    if (!inside) continue;

    const double c = cert.s_bar() * std::sqrt(rng.uniform());
    Vector x = z + sample_vdelta_ball(cert, c, rng);
    const double v0 = cert.vdelta(x, z);
    if (v0 < 1e-16) continue;

    Vector u = cert.kappa(x, z, v);
    Vector xp = model.step(x, u);
    Vector zp = model.step(z, v);
    const double v1 = cert.vdelta(xp, zp);
    const double ratio = std::sqrt(v1 / v0);
    ++rep.samples;
    if (ratio > rep.worst_ratio) {
      rep.worst_ratio = ratio;
      rep.witness_x = x;
      rep.witness_z = z;
      rep.witness_v = v;
    }
  }
  rep.violated = rep.worst_ratio > cert.rho * (1.0 + 1e-6);
  return rep;
}

}  // namespace tubempc
