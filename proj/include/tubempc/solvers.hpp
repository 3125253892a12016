#pragma once

#include <functional>
#include <optional>

#include "tubempc/types.hpp"

namespace tubempc {

enum class SolveOutcome { Optimal, Infeasible, MaxIterations, NumericalFailure };

struct SolveStatus {
  SolveOutcome outcome = SolveOutcome::NumericalFailure;
  int iterations = 0;
  double kkt_residual = kInf;
  bool unbounded = false;  // objective unbounded below (Infeasible-style result)

  bool optimal() const { return outcome == SolveOutcome::Optimal; }
};

const char* to_string(SolveOutcome s);

// --- Linear programming ------------------------------------------------------

/// min c'x  s.t.  A_ub x <= b_ub,  A_eq x = b_eq,  lb <= x <= ub.
struct LpProblem {
  Vector c;
  Matrix A_ub;
  Vector b_ub;
  Matrix A_eq;
  Vector b_eq;
  Vector lb, ub;  // empty means unbounded in that direction everywhere

  int num_vars() const { return static_cast<int>(c.size()); }
  void validate() const;
};

/// Bounded-variable primal simplex with Bland's rule.
std::pair<Vector, SolveStatus> solve_lp(const LpProblem& p, double tol = 1e-9);

// --- Quadratic programming ---------------------------------------------------

/// min 1/2 x'Hx + c'x  s.t.  A_ub x <= b_ub,  A_eq x = b_eq,  lb <= x <= ub.
struct QpProblem {
  Matrix H;
  Vector c;
  Matrix A_ub;
  Vector b_ub;
  Matrix A_eq;
  Vector b_eq;
  Vector lb, ub;

  int num_vars() const { return static_cast<int>(c.size()); }
  void validate() const;
};

/// KKT multipliers of a solved QP (zero for inactive rows).
struct QpMultipliers {
  Vector eq;        // one per A_eq row
  Vector ineq;      // one per A_ub row, >= 0
  Vector bound_lo;  // one per variable, >= 0
  Vector bound_hi;
};

/// Primal active-set solver; the lowest-index blocking constraint enters the
/// working set on ties. An optional initial point is used when feasible.
std::pair<Vector, SolveStatus> solve_qp(const QpProblem& p, double tol = 1e-9,
                                        const Vector* initial = nullptr,
                                        QpMultipliers* multipliers = nullptr);

// --- Nonlinear programming (SQP) ----------------------------------------------

/// min f(z) s.t. ce(z) = 0, ci(z) <= 0, lb <= z <= ub.
struct NlpProblem {
  std::function<double(const Vector&)> objective;
  std::function<Vector(const Vector&)> gradient;
  std::function<Vector(const Vector&)> eq;        // may be null for none
  std::function<Matrix(const Vector&)> eq_jac;
  std::function<Vector(const Vector&)> ineq;      // may be null for none
  std::function<Matrix(const Vector&)> ineq_jac;
  Vector lb, ub;
  Vector x0;

  /// Constant objective Hessian (Gauss-Newton mode); BFGS when empty.
  Matrix hessian;

  void validate() const;
};

struct SqpOptions {
  int max_iter = 200;
  double tol = 1e-6;
  double merit_penalty0 = 10.0;
  double penalty_growth = 2.0;
  bool verbose = false;
};

/// Damped-BFGS SQP with an l1 merit line search; QP subproblems go through
/// solve_qp, infeasible subproblems trigger an elastic restoration step.
std::pair<Vector, SolveStatus> solve_nlp_sqp(const NlpProblem& p, const SqpOptions& opts = {});

// --- Small dense helpers shared by design code -------------------------------

/// P solving A'PA - P + Q = 0 for Schur A, by fixed-point iteration.
Matrix solve_discrete_lyapunov(const Matrix& A, const Matrix& Q, double tol = 1e-12);

/// Infinite-horizon discrete LQR gain K (u = K x convention, K = -(R+B'PB)^-1 B'PA)
/// and cost-to-go P.
std::pair<Matrix, Matrix> dlqr(const Matrix& A, const Matrix& B, const Matrix& Q,
                               const Matrix& R);

double spectral_radius(const Matrix& A);

}  // namespace tubempc
