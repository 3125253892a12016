#include "tubempc/solvers.hpp"

#include <algorithm>
#include <cmath>

namespace tubempc {

const char* to_string(SolveOutcome s) {
  switch (s) {
    case SolveOutcome::Optimal: return "optimal";
    case SolveOutcome::Infeasible: return "infeasible";
    case SolveOutcome::MaxIterations: return "max_iterations";
    case SolveOutcome::NumericalFailure: return "numerical_failure";
  }
  return "unknown";
}

double KPoly::inverse(double y, double hi_guess) const {
  if (y <= 0.0) return 0.0;
  double hi = hi_guess;
  while ((*this)(hi) < y) {
    hi *= 2.0;
    if (hi > 1e300) return kInf;
  }
  double lo = 0.0;
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (lo + hi);
    ((*this)(mid) < y ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

void LpProblem::validate() const {
  const int n = num_vars();
  require_dims(A_ub.size() == 0 || A_ub.cols() == n, "lp: A_ub column count");
  require_dims(A_ub.rows() == b_ub.size(), "lp: A_ub/b_ub row mismatch");
  require_dims(A_eq.size() == 0 || A_eq.cols() == n, "lp: A_eq column count");
  require_dims(A_eq.rows() == b_eq.size(), "lp: A_eq/b_eq row mismatch");
  require_dims(lb.size() == 0 || lb.size() == n, "lp: lb size");
  require_dims(ub.size() == 0 || ub.size() == n, "lp: ub size");
  for (int i = 0; i < b_ub.size(); ++i)
    if (!std::isfinite(b_ub[i])) throw NumericalError("lp: non-finite b_ub");
  for (int i = 0; i < b_eq.size(); ++i)
    if (!std::isfinite(b_eq[i])) throw NumericalError("lp: non-finite b_eq");
}

namespace {

constexpr double kPivotTol = 1e-11;

enum : int8_t { kAtLower = 0, kAtUpper = 1, kFreeAtZero = 2, kBasic = 3 };

struct SimplexState {
  Matrix A;  // m x ntot, equality form
  Vector b, lb, ub, x;
  std::vector<int> basis;
  std::vector<int8_t> state;
  int m = 0, ntot = 0;
};

// One simplex run for a given cost vector. Entering variable by Dantzig's
// rule; after a stall the run switches to Bland's rule (lowest eligible
// index enters, lowest-index blocker leaves) for anti-cycling.
// Returns 0 optimal, 1 unbounded, 2 iteration cap, 3 numerical failure.
int simplex_iterate(SimplexState& st, const Vector& cost, double dtol, int max_iter,
                    int* iters_out) {
  const int m = st.m, ntot = st.ntot;
  bool bland = false;
  int stall = 0;
  double last_obj = kInf;
  for (int iter = 0; iter < max_iter; ++iter) {
    if (iters_out) *iters_out = iter + 1;
    Matrix B(m, m);
    for (int i = 0; i < m; ++i) B.col(i) = st.A.col(st.basis[i]);
    Eigen::PartialPivLU<Matrix> lu(B);

    Vector rhs = st.b;
    for (int j = 0; j < ntot; ++j)
      if (st.state[j] != kBasic && st.x[j] != 0.0) rhs -= st.A.col(j) * st.x[j];
    Vector xb = lu.solve(rhs);
    if (m > 0 && (!xb.allFinite() || (B * xb - rhs).cwiseAbs().maxCoeff() >
                                         1e-7 * (1.0 + rhs.cwiseAbs().maxCoeff()))) {
      Eigen::FullPivLU<Matrix> flu(B);
      if (!flu.isInvertible()) return 3;
      xb = flu.solve(rhs);
    }
    for (int i = 0; i < m; ++i) st.x[st.basis[i]] = xb[i];

    double obj = 0.0;
    for (int j = 0; j < ntot; ++j) obj += cost[j] * st.x[j];
    if (obj < last_obj - 1e-12 * (1.0 + std::abs(last_obj))) {
      stall = 0;
    } else if (++stall > 30) {
      bland = true;
    }
    last_obj = obj;

    Vector cb(m);
    for (int i = 0; i < m; ++i) cb[i] = cost[st.basis[i]];
    Vector y = lu.transpose().solve(cb);
    if (!y.allFinite()) {
      Eigen::FullPivLU<Matrix> fluT(B.transpose());
      if (!fluT.isInvertible()) return 3;
      y = fluT.solve(cb);
    }

    int enter = -1, dir = 0;
    double best_score = dtol;
    for (int j = 0; j < ntot; ++j) {
      if (st.state[j] == kBasic) continue;
      const double dj = cost[j] - st.A.col(j).dot(y);
      double score = 0.0;
      int djdir = 0;
      if ((st.state[j] == kAtLower || st.state[j] == kFreeAtZero) && dj < -dtol) {
        score = -dj;
        djdir = +1;
      } else if ((st.state[j] == kAtUpper || st.state[j] == kFreeAtZero) && dj > dtol) {
        score = dj;
        djdir = -1;
      }
      if (djdir == 0) continue;
      if (bland) {
        enter = j;
        dir = djdir;
        break;
      }
      if (score > best_score) {
        best_score = score;
        enter = j;
        dir = djdir;
      }
    }
    if (enter < 0) return 0;

    Vector w = lu.solve(st.A.col(enter));
    if (m > 0 && (!w.allFinite() ||
                  (B * w - st.A.col(enter)).cwiseAbs().maxCoeff() >
                      1e-7 * (1.0 + st.A.col(enter).cwiseAbs().maxCoeff()))) {
      Eigen::FullPivLU<Matrix> flu(B);
      if (!flu.isInvertible()) return 3;
      w = flu.solve(st.A.col(enter));
    }

    // Ratio test; candidate index pairs (variable index, block kind).
    double t_best = kInf;
    int leave_pos = -1;      // position in basis, -1 means the entering bound flips
    int best_var = ntot + 1; // Bland tie-break on variable index
    bool leave_at_upper = false;

    const double own_lo = st.lb[enter], own_hi = st.ub[enter];
    double t_own = kInf;
    if (dir > 0 && std::isfinite(own_hi)) t_own = own_hi - st.x[enter];
    if (dir < 0 && std::isfinite(own_lo)) t_own = st.x[enter] - own_lo;
    if (t_own < t_best - kPivotTol || (t_own < t_best + kPivotTol && enter < best_var)) {
      t_best = t_own;
      leave_pos = -1;
      best_var = enter;
    }

    for (int i = 0; i < m; ++i) {
      const int k = st.basis[i];
      const double delta = -dir * w[i];
      double t = kInf;
      bool at_upper = false;
      if (delta > kPivotTol) {
        if (std::isfinite(st.ub[k])) {
          t = (st.ub[k] - st.x[k]) / delta;
          at_upper = true;
        }
      } else if (delta < -kPivotTol) {
        if (std::isfinite(st.lb[k])) t = (st.lb[k] - st.x[k]) / delta;
      }
      if (t == kInf) continue;
      t = std::max(t, 0.0);
      if (t < t_best - kPivotTol || (t < t_best + kPivotTol && k < best_var)) {
        t_best = t;
        leave_pos = i;
        best_var = k;
        leave_at_upper = at_upper;
      }
    }

    if (t_best == kInf) return 1;

    st.x[enter] += dir * t_best;
    for (int i = 0; i < m; ++i) st.x[st.basis[i]] -= dir * w[i] * t_best;

    if (leave_pos < 0) {
      st.state[enter] = (dir > 0) ? kAtUpper : kAtLower;
      st.x[enter] = (dir > 0) ? own_hi : own_lo;
    } else {
      const int leaving = st.basis[leave_pos];
      st.state[leaving] = leave_at_upper ? kAtUpper : kAtLower;
      st.x[leaving] = leave_at_upper ? st.ub[leaving] : st.lb[leaving];
      st.basis[leave_pos] = enter;
      st.state[enter] = kBasic;
    }
  }
  return 2;
}

double primal_residual(const SimplexState& st, int n_orig, const LpProblem& p) {
  Vector x = st.x.head(n_orig);
  double r = 0.0;
  for (int i = 0; i < p.A_ub.rows(); ++i)
    r = std::max(r, p.A_ub.row(i).dot(x) - p.b_ub[i]);
  for (int i = 0; i < p.A_eq.rows(); ++i)
    r = std::max(r, std::abs(p.A_eq.row(i).dot(x) - p.b_eq[i]));
  for (int j = 0; j < n_orig; ++j) {
    if (p.lb.size()) r = std::max(r, p.lb[j] - x[j]);
    if (p.ub.size()) r = std::max(r, x[j] - p.ub[j]);
  }
  return r;
}

}  // namespace

std::pair<Vector, SolveStatus> solve_lp(const LpProblem& p, double tol) {
  p.validate();
  const int n = p.num_vars();
  const int mu = static_cast<int>(p.A_ub.rows());
  const int me = static_cast<int>(p.A_eq.rows());
  const int m = mu + me;

  SimplexState st;
  st.m = m;
  st.ntot = n + mu + m;  // structural + slacks + artificials
  st.A = Matrix::Zero(m, st.ntot);
  st.b = Vector::Zero(m);
  if (mu) {
    st.A.block(0, 0, mu, n) = p.A_ub;
    st.A.block(0, n, mu, mu) = Matrix::Identity(mu, mu);
    st.b.head(mu) = p.b_ub;
  }
  if (me) {
    st.A.block(mu, 0, me, n) = p.A_eq;
    st.b.tail(me) = p.b_eq;
  }

  st.lb = Vector::Constant(st.ntot, -kInf);
  st.ub = Vector::Constant(st.ntot, kInf);
  if (p.lb.size()) st.lb.head(n) = p.lb;
  if (p.ub.size()) st.ub.head(n) = p.ub;
  st.lb.segment(n, mu).setZero();           // slacks >= 0
  st.lb.segment(n + mu, m).setZero();       // artificials >= 0

  st.x = Vector::Zero(st.ntot);
  st.state.assign(st.ntot, kFreeAtZero);
  for (int j = 0; j < n + mu; ++j) {
    if (std::isfinite(st.lb[j])) {
      st.state[j] = kAtLower;
      st.x[j] = st.lb[j];
    } else if (std::isfinite(st.ub[j])) {
      st.state[j] = kAtUpper;
      st.x[j] = st.ub[j];
    }
  }

  // Artificial columns signed so their initial (basic) value is nonnegative.
  Vector resid = st.b;
  for (int j = 0; j < n + mu; ++j)
    if (st.x[j] != 0.0) resid -= st.A.col(j) * st.x[j];
  st.basis.resize(m);
  for (int i = 0; i < m; ++i) {
    const int aj = n + mu + i;
    st.A(i, aj) = (resid[i] >= 0.0) ? 1.0 : -1.0;
    st.x[aj] = std::abs(resid[i]);
    st.basis[i] = aj;
    st.state[aj] = kBasic;
  }

  SolveStatus status;
  const int max_iter = 2000 + 200 * st.ntot;

  Vector phase1_cost = Vector::Zero(st.ntot);
  phase1_cost.tail(m).setOnes();
  int it1 = 0;
  int rc = simplex_iterate(st, phase1_cost, 1e-10, max_iter, &it1);
  status.iterations = it1;
  if (rc == 3) {
    status.outcome = SolveOutcome::NumericalFailure;
    return {Vector::Zero(n), status};
  }
  if (rc == 2) {
    status.outcome = SolveOutcome::MaxIterations;
    return {st.x.head(n), status};
  }
  double art_sum = 0.0;
  for (int i = 0; i < m; ++i) art_sum += std::abs(st.x[n + mu + i]);
  if (art_sum > 1e-8 * (1.0 + (m > 0 ? st.b.cwiseAbs().maxCoeff() : 0.0))) {
    status.outcome = SolveOutcome::Infeasible;
    return {st.x.head(n), status};
  }
  // Pin artificials at zero for phase 2.
  for (int i = 0; i < m; ++i) {
    st.lb[n + mu + i] = 0.0;
    st.ub[n + mu + i] = 0.0;
    if (st.state[n + mu + i] != kBasic) {
      st.state[n + mu + i] = kAtLower;
      st.x[n + mu + i] = 0.0;
    }
  }

  Vector cost = Vector::Zero(st.ntot);
  cost.head(n) = p.c;
  const double dtol = std::max(tol, 1e-12) * (1.0 + p.c.cwiseAbs().maxCoeff());
  int it2 = 0;
  rc = simplex_iterate(st, cost, dtol, max_iter, &it2);
  status.iterations += it2;

  Vector x = st.x.head(n);
  switch (rc) {
    case 0:
      status.outcome = SolveOutcome::Optimal;
      status.kkt_residual = std::max(primal_residual(st, n, p), 0.0);
      if (status.kkt_residual > std::max(tol, 1e-7)) {
        status.outcome = SolveOutcome::NumericalFailure;
      }
      break;
    case 1:
      status.outcome = SolveOutcome::Infeasible;
      status.unbounded = true;
      break;
    case 2:
      status.outcome = SolveOutcome::MaxIterations;
      break;
    default:
      status.outcome = SolveOutcome::NumericalFailure;
      break;
  }
  return {x, status};
}

Matrix solve_discrete_lyapunov(const Matrix& A, const Matrix& Q, double tol) {
  require_dims(A.rows() == A.cols() && Q.rows() == Q.cols() && A.rows() == Q.rows(),
               "lyapunov: square matrices of equal size required");
  const double sr = spectral_radius(A);
  if (sr >= 1.0 - 1e-9)
    throw DesignError("lyapunov: closed-loop matrix not Schur (spectral radius " +
                      std::to_string(sr) + ")");
  // Doubled form of the fixed point P <- A'PA + Q.
  Matrix P = Q;
  Matrix Ak = A;
  for (int it = 0; it < 200; ++it) {
    Matrix next = Ak.transpose() * P * Ak + P;  // partial sum over 2^(it+1) terms
    Ak = Ak * Ak;
    double delta = (next - P).cwiseAbs().maxCoeff();
    P = next;
    if (delta < tol) break;
  }
  P = 0.5 * (P + P.transpose());
  return P;
}

std::pair<Matrix, Matrix> dlqr(const Matrix& A, const Matrix& B, const Matrix& Q,
                               const Matrix& R) {
  Matrix P = Q;
  for (int it = 0; it < 100000; ++it) {
    Matrix BtPB = R + B.transpose() * P * B;
    Matrix K = -BtPB.ldlt().solve(B.transpose() * P * A);
    Matrix Pn = Q + K.transpose() * R * K +
                (A + B * K).transpose() * P * (A + B * K);
    double delta = (Pn - P).cwiseAbs().maxCoeff();
    P = 0.5 * (Pn + Pn.transpose());
    if (delta < 1e-12 * (1.0 + P.cwiseAbs().maxCoeff())) break;
  }
  Matrix K = -(R + B.transpose() * P * B).ldlt().solve(B.transpose() * P * A);
  return {K, P};
}

double spectral_radius(const Matrix& A) {
  Eigen::EigenSolver<Matrix> es(A, /*computeEigenvectors=*/false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace tubempc
