#include "tubempc/solvers.hpp"

#include <algorithm>
#include <cmath>

namespace tubempc {

void NlpProblem::validate() const {
  require(static_cast<bool>(objective) && static_cast<bool>(gradient),
          "nlp: objective and gradient required");
  require(x0.size() > 0, "nlp: initial guess required");
  for (int i = 0; i < x0.size(); ++i)
    if (!std::isfinite(x0[i])) throw NumericalError("nlp: non-finite initial guess");
  require((static_cast<bool>(eq) == static_cast<bool>(eq_jac)) &&
              (static_cast<bool>(ineq) == static_cast<bool>(ineq_jac)),
          "nlp: constraint evaluators and Jacobians come in pairs");
}

namespace {

struct Evals {
  double f = 0.0;
  Vector g, ce, ci;
  Matrix Je, Ji;
};

Evals evaluate(const NlpProblem& p, const Vector& z, bool with_jac) {
  Evals e;
  e.f = p.objective(z);
  e.g = p.gradient(z);
  if (p.eq) {
    e.ce = p.eq(z);
    if (with_jac) e.Je = p.eq_jac(z);
  }
  if (p.ineq) {
    e.ci = p.ineq(z);
    if (with_jac) e.Ji = p.ineq_jac(z);
  }
  return e;
}

double violation_l1(const Evals& e) {
  double v = 0.0;
  for (int i = 0; i < e.ce.size(); ++i) v += std::abs(e.ce[i]);
  for (int i = 0; i < e.ci.size(); ++i) v += std::max(e.ci[i], 0.0);
  return v;
}

Vector clamp_box(const NlpProblem& p, Vector z) {
  for (int j = 0; j < z.size(); ++j) {
    if (p.lb.size() && z[j] < p.lb[j]) z[j] = p.lb[j];
    if (p.ub.size() && z[j] > p.ub[j]) z[j] = p.ub[j];
  }
  return z;
}

// Elastic step: minimize linearized constraint violation plus a small step
// penalty, used when the standard QP subproblem is infeasible.
Vector restoration_step(const NlpProblem& p, const Vector& z, const Evals& e) {
  const int n = static_cast<int>(z.size());
  const int me = static_cast<int>(e.ce.size());
  const int mi = static_cast<int>(e.ci.size());
  const int ntot = n + 2 * me + mi;  // d, r+, r-, s

  QpProblem qp;
  qp.H = Matrix::Zero(ntot, ntot);
  qp.H.topLeftCorner(n, n) = 1e-4 * Matrix::Identity(n, n);
  qp.c = Vector::Zero(ntot);
  qp.c.segment(n, 2 * me).setOnes();
  qp.c.tail(mi).setOnes();

  qp.A_eq = Matrix::Zero(me, ntot);
  qp.b_eq = Vector::Zero(me);
  if (me) {
    qp.A_eq.leftCols(n) = e.Je;
    qp.A_eq.block(0, n, me, me) = -Matrix::Identity(me, me);
    qp.A_eq.block(0, n + me, me, me) = Matrix::Identity(me, me);
    qp.b_eq = -e.ce;
  }
  qp.A_ub = Matrix::Zero(mi, ntot);
  qp.b_ub = Vector::Zero(mi);
  if (mi) {
    qp.A_ub.leftCols(n) = e.Ji;
    qp.A_ub.rightCols(mi) = -Matrix::Identity(mi, mi);
    qp.b_ub = -e.ci;
  }
  qp.lb = Vector::Constant(ntot, -kInf);
  qp.ub = Vector::Constant(ntot, kInf);
  for (int j = 0; j < n; ++j) {
    if (p.lb.size()) qp.lb[j] = p.lb[j] - z[j];
    if (p.ub.size()) qp.ub[j] = p.ub[j] - z[j];
  }
  qp.lb.segment(n, 2 * me + mi).setZero();

  auto [sol, st] = solve_qp(qp, 1e-9);
  if (!st.optimal()) return Vector::Zero(n);
  return sol.head(n);
}

}  // namespace

std::pair<Vector, SolveStatus> solve_nlp_sqp(const NlpProblem& p, const SqpOptions& opts) {
  p.validate();
  const int n = static_cast<int>(p.x0.size());
  Vector z = clamp_box(p, p.x0);
  const bool gauss_newton = p.hessian.size() > 0;
  Matrix B = gauss_newton ? Matrix(0.5 * (p.hessian + p.hessian.transpose()))
                          : Matrix(Matrix::Identity(n, n));
  if (gauss_newton) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(B, Eigen::EigenvaluesOnly);
    const double lmin = es.eigenvalues().minCoeff();
    if (lmin < 1e-9) B += (1e-9 - std::min(lmin, 0.0)) * Matrix::Identity(n, n);
  }
  double mu = opts.merit_penalty0;

  SolveStatus status;
  Evals e = evaluate(p, z, true);
  Vector lam_eq = Vector::Zero(e.ce.size());
  Vector lam_in = Vector::Zero(e.ci.size());
  int restoration_streak = 0;

  for (int iter = 0; iter < opts.max_iter; ++iter) {
    status.iterations = iter + 1;

    QpProblem qp;
    qp.H = B;
    qp.c = e.g;
    if (e.ce.size()) {
      qp.A_eq = e.Je;
      qp.b_eq = -e.ce;
    }
    if (e.ci.size()) {
      qp.A_ub = e.Ji;
      qp.b_ub = -e.ci;
    }
    qp.lb = Vector::Constant(n, -kInf);
    qp.ub = Vector::Constant(n, kInf);
    for (int j = 0; j < n; ++j) {
      if (p.lb.size()) qp.lb[j] = p.lb[j] - z[j];
      if (p.ub.size()) qp.ub[j] = p.ub[j] - z[j];
    }

    QpMultipliers mult;
    const Vector d0 = Vector::Zero(n);  // feasible for the subproblem at feasible z
    auto [d, qst] = solve_qp(qp, 1e-10, &d0, &mult);

    Vector step;
    bool restored = false;
    if (!qst.optimal()) {
      step = restoration_step(p, z, e);
      restored = true;
      ++restoration_streak;
      if (step.norm() < 1e-9 * (1.0 + z.norm()) || restoration_streak > 5) {
        status.outcome = SolveOutcome::Infeasible;
        return {z, status};
      }
    } else {
      restoration_streak = 0;
      step = d;
      if (e.ce.size()) lam_eq = mult.eq;
      if (e.ci.size()) lam_in = mult.ineq;
      double lam_max = 0.0;
      for (int i = 0; i < lam_eq.size(); ++i) lam_max = std::max(lam_max, std::abs(lam_eq[i]));
      for (int i = 0; i < lam_in.size(); ++i) lam_max = std::max(lam_max, lam_in[i]);
      if (mu < 1.1 * lam_max) mu = opts.penalty_growth * lam_max + 1.0;
    }

    // l1 merit line search (Armijo backtracking). A full step that halves the
    // stationarity-plus-violation measure is accepted even when the merit
    // stalls (curvature of nonlinear constraints can block the merit near a
    // feasible warm start).
    const double viol0 = violation_l1(e);
    const double phi0 = e.f + mu * viol0;
    const double deriv = e.g.dot(step) - mu * viol0;
    auto kkt_measure = [&](const Evals& ev) {
      Vector gl = ev.g;
      if (ev.ce.size() && lam_eq.size() == ev.ce.size()) gl += ev.Je.transpose() * lam_eq;
      if (ev.ci.size() && lam_in.size() == ev.ci.size()) gl += ev.Ji.transpose() * lam_in;
      return gl.cwiseAbs().maxCoeff() + violation_l1(ev);
    };
    double t = 1.0;
    Vector z_new;
    Evals e_new;
    bool accepted = false;
    for (int ls = 0; ls < 40; ++ls) {
      z_new = clamp_box(p, z + t * step);
      e_new = evaluate(p, z_new, ls == 0);
      const double phi = e_new.f + mu * violation_l1(e_new);
      const double target = (!restored && deriv < 0.0) ? phi0 + 1e-4 * t * deriv
                                                       : phi0 - 1e-12 * std::abs(phi0);
      if (phi <= target || (restored && violation_l1(e_new) < viol0)) {
        accepted = true;
        break;
      }
      if (ls == 0 && !restored && kkt_measure(e_new) < 0.5 * kkt_measure(e)) {
        accepted = true;  // watchdog acceptance of the full step
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      // No merit progress; either converged to tolerance or stuck.
      z_new = z;
      e_new = e;
    }

    Evals e_full = evaluate(p, z_new, true);

    // First-order KKT residual with projected stationarity at the bounds.
    Vector grad_lag = e_full.g;
    if (e_full.ce.size()) grad_lag += e_full.Je.transpose() * lam_eq;
    if (e_full.ci.size()) grad_lag += e_full.Ji.transpose() * lam_in;
    double stat = 0.0;
    for (int j = 0; j < n; ++j) {
      const bool at_lo = p.lb.size() && z_new[j] <= p.lb[j] + 1e-10;
      const bool at_hi = p.ub.size() && z_new[j] >= p.ub[j] - 1e-10;
      double r = grad_lag[j];
      if (at_lo) r = std::min(r, 0.0);  // multiplier absorbs positive part
      if (at_hi) r = std::max(r, 0.0);
      stat = std::max(stat, std::abs(r));
    }
    double viol = 0.0, compl_res = 0.0;
    for (int i = 0; i < e_full.ce.size(); ++i) viol = std::max(viol, std::abs(e_full.ce[i]));
    for (int i = 0; i < e_full.ci.size(); ++i) {
      viol = std::max(viol, e_full.ci[i]);
      compl_res = std::max(compl_res, std::abs(lam_in[i] * e_full.ci[i]));
    }
    const double kkt = std::max({stat, viol, compl_res});

    if (kkt <= opts.tol) {
      status.outcome = SolveOutcome::Optimal;
      status.kkt_residual = kkt;
      return {z_new, status};
    }
    if (!accepted && step.norm() < 1e-12) {
      status.outcome = viol > opts.tol ? SolveOutcome::Infeasible : SolveOutcome::NumericalFailure;
      status.kkt_residual = kkt;
      return {z_new, status};
    }

    // Damped BFGS on the Lagrangian gradient difference.
    const Vector s = z_new - z;
    if (!gauss_newton && !restored && s.norm() > 1e-14) {
      Vector grad_lag_old = e.g;
      if (e.ce.size()) grad_lag_old += e.Je.transpose() * lam_eq;
      if (e.ci.size()) grad_lag_old += e.Ji.transpose() * lam_in;
      Vector y = grad_lag - grad_lag_old;
      const double sBs = s.dot(B * s);
      double sy = s.dot(y);
      if (sy < 0.2 * sBs) {
        const double theta = 0.8 * sBs / (sBs - sy);
        y = theta * y + (1.0 - theta) * (B * s);
        sy = s.dot(y);
      }
      if (sy > 1e-12 && sBs > 1e-14) {
        B += (y * y.transpose()) / sy - (B * s) * (s.transpose() * B) / sBs;
        B = 0.5 * (B + B.transpose());
      }
    }

    z = z_new;
    e = e_full;
    status.kkt_residual = kkt;
  }

  status.outcome = SolveOutcome::MaxIterations;
  return {z, status};
}

}  // namespace tubempc
