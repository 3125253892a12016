#pragma once

#include <optional>
#include <variant>

#include "tubempc/certificate.hpp"
#include "tubempc/model.hpp"
#include "tubempc/solvers.hpp"
#include "tubempc/terminal.hpp"
#include "tubempc/uncertainty.hpp"

namespace tubempc {

enum class OcpMode { FullTube, AdditiveOffline };

/// Everything the online problem needs, produced by the offline pipeline.
struct Design {
  NominalModel model;
  StageCost cost;
  ConstraintSet constraints;
  StabilizabilityCertificate cert;
  std::vector<double> gains;  // c_j per tightened constraint row
  TubeBound tube;
  TerminalIngredients terminal;
  int N = 10;
  OcpMode mode = OcpMode::FullTube;

  /// Continuous-time tube designs: s+ = e^{-(rho_c - L_w) h} s + gain * w with
  /// the slope folded into the decay and w-rows evaluated at c = 0.
  bool ct_tube = false;
  double rho_c = 0.0;

  double tube_decay() const;
  double tube_gain() const;
  /// Effective slope multiplying s inside the w-rows (0 for ct_tube designs).
  double row_slope() const;
};

struct OcpSpec {
  const Design* design = nullptr;
  Vector x0;
  std::optional<Matrix> warm_x;  // shifted previous solution, same shapes as OcpSolution
  std::optional<Matrix> warm_u;
  std::optional<Vector> warm_s;
  std::optional<Vector> warm_w;
  std::optional<Matrix> warm_h;
  double tube_scale = 1.0;  // test hook; 0 gives the nominal problem
};

struct OcpSolution {
  Matrix x;  // (N+1) x n
  Matrix u;  // N x m
  Vector s;  // N+1
  Vector w;  // N
  Matrix h;  // q x (N+1)
  double value = 0.0;
  SolveStatus status;
};

// Tube/h propagation primitives.
double propagate_tube(double s, double w, double rho);
double tighten(double g_val, double c_j, double s);
double propagate_h(double h, double w, double rho, double c_tilde, double lambda);

/// Exact zero-order-hold discretization of ds/dt = (L_w - rho_c) s + w0.
double discretize_tube_ct(double s, double w0, double rho_c, double L_w, double h);

/// Variable stacking of the assembled problem (stage-major).
struct VarLayout {
  int N = 0, n = 0, m = 0, q = 0;
  bool full = true;

  int stage_size() const { return full ? (m + 1 + n + 1 + q) : (m + n); }
  int total() const { return N * stage_size() + (full ? n + 1 + q : n); }
  int u(int k) const { return k * stage_size(); }
  int w(int k) const { return k * stage_size() + m; }
  int x(int k) const {
    if (k < N) return k * stage_size() + m + (full ? 1 : 0);
    return N * stage_size();
  }
  int s(int k) const {
    if (k < N) return k * stage_size() + m + 1 + n;
    return N * stage_size() + n;
  }
  int h(int j, int k) const {
    if (k < N) return k * stage_size() + m + 1 + n + 1 + j;
    return N * stage_size() + n + 1 + j;
  }
};

struct AssembledOcp {
  VarLayout layout;
  bool is_qp = false;
  QpProblem qp;
  NlpProblem nlp;
};

/// Builds the stacked problem; QP when the model is LTI, all constraints are
/// affine, the tube rows are affine, and the terminal set is polyhedral.
AssembledOcp assemble(const OcpSpec& spec);

OcpSolution solve(const OcpSpec& spec);

struct SolutionResiduals {
  double dynamics = 0.0;    // max ||x_{k+1} - f(x_k,u_k)||
  double tube = 0.0;        // max |s_{k+1} - (decay s_k + gain w_k)|
  double w_rows = 0.0;      // max (w_tilde - w_k)
  double tightened = 0.0;   // max (g_j + c_j s_k)
  double caps = 0.0;        // max bound violation of s/w caps
  double terminal = 0.0;    // terminal set residual
  double hoelder = 0.0;     // h recursion + g~ + terminal h residuals
  double worst() const;
};

/// Evaluates every constraint family of the problem on a (candidate) solution.
SolutionResiduals evaluate_residuals(const Design& design, const OcpSolution& sol,
                                     const Vector& x0, double tube_scale = 1.0);

}  // namespace tubempc
