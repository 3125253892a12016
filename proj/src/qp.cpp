#include "tubempc/solvers.hpp"

#include <algorithm>
#include <cmath>

namespace tubempc {

void QpProblem::validate() const {
  const int n = num_vars();
  require_dims(H.rows() == n && H.cols() == n, "qp: H size");
  require_dims(A_ub.size() == 0 || A_ub.cols() == n, "qp: A_ub column count");
  require_dims(A_ub.rows() == b_ub.size(), "qp: A_ub/b_ub row mismatch");
  require_dims(A_eq.size() == 0 || A_eq.cols() == n, "qp: A_eq column count");
  require_dims(A_eq.rows() == b_eq.size(), "qp: A_eq/b_eq row mismatch");
  require_dims(lb.size() == 0 || lb.size() == n, "qp: lb size");
  require_dims(ub.size() == 0 || ub.size() == n, "qp: ub size");
  const double hscale = 1.0 + H.cwiseAbs().maxCoeff();
  if ((H - H.transpose()).cwiseAbs().maxCoeff() > 1e-10 * hscale)
    throw NumericalError("qp: H not symmetric");
}

namespace {

struct IneqRows {
  Matrix A;  // all inequality rows a_i' x <= b_i (general rows then bounds)
  Vector b;
  std::vector<std::pair<int8_t, int>> origin;  // 0: A_ub row, 1: ub_j, 2: lb_j
};

IneqRows collect_inequalities(const QpProblem& p) {
  const int n = p.num_vars();
  int nb = 0;
  for (int j = 0; j < n; ++j) {
    if (p.ub.size() && std::isfinite(p.ub[j])) ++nb;
    if (p.lb.size() && std::isfinite(p.lb[j])) ++nb;
  }
  IneqRows r;
  const int mu = static_cast<int>(p.A_ub.rows());
  r.A = Matrix::Zero(mu + nb, n);
  r.b = Vector::Zero(mu + nb);
  r.origin.reserve(mu + nb);
  if (mu) {
    r.A.topRows(mu) = p.A_ub;
    r.b.head(mu) = p.b_ub;
  }
  for (int i = 0; i < mu; ++i) r.origin.emplace_back(0, i);
  int k = mu;
  for (int j = 0; j < n; ++j) {
    if (p.ub.size() && std::isfinite(p.ub[j])) {
      r.A(k, j) = 1.0;
      r.b[k++] = p.ub[j];
      r.origin.emplace_back(1, j);
    }
    if (p.lb.size() && std::isfinite(p.lb[j])) {
      r.A(k, j) = -1.0;
      r.b[k++] = -p.lb[j];
      r.origin.emplace_back(2, j);
    }
  }
  return r;
}

Vector phase1_point(const QpProblem& p, SolveStatus& status) {
  LpProblem lp;
  lp.c = Vector::Zero(p.num_vars());
  lp.A_ub = p.A_ub;
  lp.b_ub = p.b_ub;
  lp.A_eq = p.A_eq;
  lp.b_eq = p.b_eq;
  lp.lb = p.lb;
  lp.ub = p.ub;
  auto [x, st] = solve_lp(lp, 1e-10);
  status = st;
  return x;
}

}  // namespace

std::pair<Vector, SolveStatus> solve_qp(const QpProblem& p, double tol, const Vector* initial,
                                        QpMultipliers* multipliers) {
  p.validate();
  const int n = p.num_vars();
  SolveStatus status;

  Matrix H = 0.5 * (p.H + p.H.transpose());
  {
    Eigen::SelfAdjointEigenSolver<Matrix> es(H, Eigen::EigenvaluesOnly);
    const double lmin = es.eigenvalues().minCoeff();
    const double hscale = 1.0 + H.cwiseAbs().maxCoeff();
    if (lmin < -1e-8 * hscale) throw NumericalError("qp: H indefinite");
    if (lmin < 0.0) H += (-lmin + 1e-14 * hscale) * Matrix::Identity(n, n);
  }

  const IneqRows iq = collect_inequalities(p);
  const int mi = static_cast<int>(iq.A.rows());
  const int me = static_cast<int>(p.A_eq.rows());
  const double ftol = 1e-9 * (1.0 + (iq.b.size() ? iq.b.cwiseAbs().maxCoeff() : 0.0));

  auto feasible = [&](const Vector& x) {
    for (int i = 0; i < mi; ++i)
      if (iq.A.row(i).dot(x) > iq.b[i] + ftol) return false;
    for (int i = 0; i < me; ++i)
      if (std::abs(p.A_eq.row(i).dot(x) - p.b_eq[i]) > ftol) return false;
    return true;
  };

  Vector x;
  if (initial && initial->size() == n && feasible(*initial)) {
    x = *initial;
  } else {
    SolveStatus p1;
    x = phase1_point(p, p1);
    if (!p1.optimal()) {
      status.outcome = p1.outcome == SolveOutcome::MaxIterations ? SolveOutcome::MaxIterations
                                                                 : SolveOutcome::Infeasible;
      return {x, status};
    }
  }

  // Working set over inequality rows; equalities are always active.
  std::vector<bool> in_ws(mi, false);
  std::vector<int> ws;
  auto stack_active = [&]() {
    Matrix A(me + static_cast<int>(ws.size()), n);
    if (me) A.topRows(me) = p.A_eq;
    for (size_t i = 0; i < ws.size(); ++i) A.row(me + static_cast<int>(i)) = iq.A.row(ws[i]);
    return A;
  };
  auto rank_of = [&](const Matrix& A) {
    if (A.rows() == 0) return 0l;
    Eigen::ColPivHouseholderQR<Matrix> qr(A.transpose());
    qr.setThreshold(1e-10);
    return qr.rank();
  };

  // Seed the working set with independent active rows at x.
  for (int i = 0; i < mi; ++i) {
    if (iq.b[i] - iq.A.row(i).dot(x) <= ftol) {
      ws.push_back(i);
      Matrix A = stack_active();
      if (rank_of(A) < A.rows()) {
        ws.pop_back();
      } else {
        in_ws[i] = true;
      }
    }
  }

  const int max_iter = 100 + 50 * (n + mi + me);
  const double step_tol = 1e-11 * (1.0 + x.norm());

  Vector lam;  // multipliers of the stacked active rows
  for (int iter = 0; iter < max_iter; ++iter) {
    status.iterations = iter + 1;
    Matrix A = stack_active();
    const int ma = static_cast<int>(A.rows());
    Vector g = H * x + p.c;

    Matrix kkt = Matrix::Zero(n + ma, n + ma);
    kkt.topLeftCorner(n, n) = H;
    if (ma) {
      kkt.topRightCorner(n, ma) = A.transpose();
      kkt.bottomLeftCorner(ma, n) = A;
    }
    Vector rhs = Vector::Zero(n + ma);
    rhs.head(n) = -g;

    // Partial pivoting first; the full-pivot fallback covers singular KKT
    // systems from semidefinite reduced Hessians.
    Vector sol = kkt.partialPivLu().solve(rhs);
    if (!sol.allFinite() ||
        (kkt * sol - rhs).cwiseAbs().maxCoeff() > 1e-8 * (1.0 + rhs.cwiseAbs().maxCoeff())) {
      Eigen::FullPivLU<Matrix> lu(kkt);
      if (lu.isInvertible()) {
        sol = lu.solve(rhs);
      } else {
        // Semidefinite reduced Hessian: tiny primal regularization.
        Matrix kkt_reg = kkt;
        const double reg = 1e-11 * (1.0 + H.cwiseAbs().maxCoeff());
        kkt_reg.topLeftCorner(n, n) += reg * Matrix::Identity(n, n);
        Eigen::FullPivLU<Matrix> lu2(kkt_reg);
        if (!lu2.isInvertible()) {
          status.outcome = SolveOutcome::NumericalFailure;
          return {x, status};
        }
        sol = lu2.solve(rhs);
        if (sol.head(n).norm() > 1e12) {
          status.outcome = SolveOutcome::Infeasible;
          status.unbounded = true;
          return {x, status};
        }
      }
    }
    Vector pstep = sol.head(n);
    lam = sol.tail(ma);

    if (pstep.norm() <= step_tol) {
      // Check inequality multipliers; drop the most negative (lowest index on ties).
      int drop = -1;
      double most_neg = -1e-9 * (1.0 + g.norm());
      for (size_t i = 0; i < ws.size(); ++i) {
        const double li = lam[me + static_cast<int>(i)];
        if (li < most_neg) {
          most_neg = li;
          drop = static_cast<int>(i);
        }
      }
      if (drop < 0) {
        status.outcome = SolveOutcome::Optimal;
        break;
      }
      in_ws[ws[drop]] = false;
      ws.erase(ws.begin() + drop);
      continue;
    }

    // Ratio test over rows outside the working set; lowest index enters.
    double alpha = 1.0;
    int block = -1;
    for (int i = 0; i < mi; ++i) {
      if (in_ws[i]) continue;
      const double ap = iq.A.row(i).dot(pstep);
      if (ap <= 1e-12) continue;
      const double ai = (iq.b[i] - iq.A.row(i).dot(x)) / ap;
      if (ai < alpha - 1e-12) {
        alpha = std::max(ai, 0.0);
        block = i;
      }
    }
    x += alpha * pstep;
    if (block >= 0) {
      ws.push_back(block);
      Matrix Anew = stack_active();
      if (rank_of(Anew) < Anew.rows()) {
        ws.pop_back();  // degenerate row; keep stepping
      } else {
        in_ws[block] = true;
      }
    }
  }
  if (status.outcome != SolveOutcome::Optimal) status.outcome = SolveOutcome::MaxIterations;

  if (status.outcome == SolveOutcome::Optimal) {
    // KKT residual: stationarity, primal feasibility, dual sign, complementarity.
    Vector g = H * x + p.c;
    Vector grad_lag = g;
    double dual_viol = 0.0, compl_viol = 0.0, primal_viol = 0.0;
    for (int i = 0; i < me; ++i) {
      grad_lag += p.A_eq.row(i).transpose() * lam[i];
      primal_viol = std::max(primal_viol, std::abs(p.A_eq.row(i).dot(x) - p.b_eq[i]));
    }
    for (size_t i = 0; i < ws.size(); ++i) {
      const double li = lam[me + static_cast<int>(i)];
      grad_lag += iq.A.row(ws[i]).transpose() * li;
      dual_viol = std::max(dual_viol, -li);
    }
    for (int i = 0; i < mi; ++i) {
      const double resid = iq.A.row(i).dot(x) - iq.b[i];
      primal_viol = std::max(primal_viol, resid);
      if (!in_ws[i]) compl_viol = std::max(compl_viol, 0.0);  // inactive rows have zero multiplier
    }
    status.kkt_residual =
        std::max({grad_lag.cwiseAbs().maxCoeff(), primal_viol, dual_viol, compl_viol});
    if (status.kkt_residual > std::max(tol, 1e-7) * (1.0 + g.norm())) {
      status.outcome = SolveOutcome::NumericalFailure;
    }
    if (multipliers) {
      multipliers->eq = lam.head(me);
      multipliers->ineq = Vector::Zero(p.A_ub.rows());
      multipliers->bound_lo = Vector::Zero(n);
      multipliers->bound_hi = Vector::Zero(n);
      for (size_t i = 0; i < ws.size(); ++i) {
        const double li = std::max(lam[me + static_cast<int>(i)], 0.0);
        const auto [kind, idx] = iq.origin[ws[i]];
        if (kind == 0) multipliers->ineq[idx] = li;
        else if (kind == 1) multipliers->bound_hi[idx] = li;
        else multipliers->bound_lo[idx] = li;
      }
    }
  }
  return {x, status};
}

}  // namespace tubempc
