#pragma once

#include <functional>
#include <optional>
#include <variant>

#include "tubempc/types.hpp"

namespace tubempc {

enum class ModelKind { DiscreteMap, ContinuousRhs };

/// Nominal dynamics. Continuous-kind models are exposed to the rest of the
/// system only through a fixed-step RK4 discretization with step h.
struct NominalModel {
  int n = 0;
  int m = 0;
  ModelKind kind = ModelKind::DiscreteMap;
  double h = 0.0;  // sampling time, continuous kind only

  /// Discrete map x+ = f(x,u), or state derivative for continuous kind.
  std::function<Vector(const Vector&, const Vector&)> f;

  /// Optional analytic Jacobians of f (the map/rhs as stored, not the step).
  std::function<Matrix(const Vector&, const Vector&)> jac_x;
  std::function<Matrix(const Vector&, const Vector&)> jac_u;

  /// Set for LTI discrete maps; enables the QP path of the online problem.
  bool linear = false;
  Matrix A, B;

  static NominalModel lti(const Matrix& A, const Matrix& B);
  static NominalModel discrete(int n, int m,
                               std::function<Vector(const Vector&, const Vector&)> f);
  static NominalModel continuous(int n, int m, double h,
                                 std::function<Vector(const Vector&, const Vector&)> rhs);

  /// One-step map: f(x,u) for discrete kind, one RK4 step of size h otherwise.
  Vector step(const Vector& x, const Vector& u) const;

  /// RK4 step with an explicit step size (sub-stepping, order checks).
  Vector rk4_step(const Vector& x, const Vector& u, double step_size) const;

  /// Jacobians of the one-step map (analytic for LTI, central differences
  /// otherwise, step max(1e-6, 1e-8*||x||)).
  Matrix step_jac_x(const Vector& x, const Vector& u) const;
  Matrix step_jac_u(const Vector& x, const Vector& u) const;
};

Vector eval_dynamics(const NominalModel& model, const Vector& x, const Vector& u);

// --- Constraints -----------------------------------------------------------

/// Normalized affine constraint Lx*x + Lu*u - 1 <= 0.
struct AffineConstraint {
  Vector Lx, Lu;
};

/// Nonlinear constraint with a known Lipschitz constant in the joint (x,u) norm.
struct LipschitzConstraint {
  std::function<double(const Vector&, const Vector&)> g;
  double L = 0.0;
};

/// Constraint with a power-law continuity bound: increase <= c_tilde * r^lambda.
/// These take the h-recursion path instead of the s-tightening.
struct HoelderConstraint {
  std::function<double(const Vector&, const Vector&)> g;
  double c_tilde = 0.0;
  double lambda = 1.0;
  /// Optional gradient wrt (x,u), stacked; finite differences otherwise.
  std::function<Vector(const Vector&, const Vector&)> grad;
};

using Constraint = std::variant<AffineConstraint, LipschitzConstraint, HoelderConstraint>;

struct ConstraintSet {
  std::vector<Constraint> items;

  int size() const { return static_cast<int>(items.size()); }
  bool all_affine_tightened() const;
  /// Indices of Lipschitz-type rows (affine + Lipschitz), in order.
  std::vector<int> tightened_indices() const;
  std::vector<int> hoelder_indices() const;

  void validate() const;
};

double eval_constraint(const ConstraintSet& cs, int j, const Vector& x, const Vector& u);

/// L_j for a tightened row: Euclidean norm of the stacked affine row, or the
/// declared Lipschitz constant.
double constraint_lipschitz(const ConstraintSet& cs, int j);

/// Componentwise bounding box of the affine part of Z, via one LP per face.
/// Rows beyond the affine ones are ignored (the box is an outer bound).
struct BoxBounds {
  Vector lo, hi;  // stacked (x,u)
};
BoxBounds affine_bounding_box(const ConstraintSet& cs, int n, int m);

/// max ||(x,u)|| over the affine outer box; used by cost moduli.
double set_radius(const ConstraintSet& cs, int n, int m);

// --- Stage cost -------------------------------------------------------------

struct StageCost {
  Matrix Q, R;
  Vector x_ref, u_ref;  // reference the deviation coordinates are taken about

  double eval(const Vector& x, const Vector& u) const {
    return x.dot(Q * x) + u.dot(R * u);
  }
  double lambda_min_joint() const;  // min eig of diag(Q,R)
  double lambda_max_joint() const;
  void validate() const;

  /// alpha_l(r) = lambda_min(diag(Q,R)) r^2.
  KPoly alpha_l() const { return KPoly{{0.0, lambda_min_joint()}}; }
  double alpha_l_inverse(double v) const;

  /// Continuity modulus of the quadratic cost on a set of radius D:
  /// alpha_c(t) = lambda_max t^2 + 2 lambda_max D t.
  KPoly alpha_c(double set_radius) const;
};

// --- Uncertainty ------------------------------------------------------------

/// d_w = E d with ||d|| <= radius.
struct AdditiveBall {
  Matrix E;
  double radius = 0.0;
};

/// d_w = A_theta (x_ref + x) + B_theta (u_ref + u) + E d, with
/// A_theta = sum_i theta_i A_i and theta (resp. d) ranging over the convex
/// hull of the listed vertices. The matrices act on plant coordinates; the
/// reference (empty = zero) shifts the deviation-coordinate arguments.
struct LpvUncertainty {
  std::vector<Matrix> A;              // q matrices, n x n
  std::vector<Matrix> B;              // q matrices, n x m
  std::vector<Vector> theta_vertices; // each of size q
  Matrix E;                           // n x nd (may be 0 x 0 for none)
  std::vector<Vector> d_vertices;     // each of size nd
  Vector x_ref, u_ref;

  Matrix A_at(const Vector& theta) const;
  Matrix B_at(const Vector& theta) const;
  /// A_theta x_ref + B_theta u_ref (zero when no reference is set).
  Vector offset_at(const Vector& theta) const;
};

/// Only a scalar bound ||d_w|| <= w_hat(x,u) is known, with w_hat Lipschitz.
struct CustomBound {
  std::function<double(const Vector&, const Vector&)> w_hat;
  double L = 0.0;
};

using UncertaintyModel = std::variant<AdditiveBall, LpvUncertainty, CustomBound>;

void validate_uncertainty(const UncertaintyModel& um, int n, int m);

/// An element of W(x,u) maximizing <direction, d_w>. Vertex enumeration for
/// LPV; zero-direction ties break to the first vertex (zero for balls).
Vector sample_worstcase_mismatch(const UncertaintyModel& um, const Vector& x,
                                 const Vector& u, const Vector& direction);

}  // namespace tubempc
