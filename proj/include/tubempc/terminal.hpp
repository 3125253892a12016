#pragma once

#include <optional>

#include "tubempc/certificate.hpp"
#include "tubempc/model.hpp"
#include "tubempc/uncertainty.hpp"

namespace tubempc {

/// Terminal region for the augmented state (x, s).
struct TerminalSet {
  enum class Kind {
    QuadLevel,     // x'Sx <= level, s <= s_cap
    PolyBallRows,  // rows_i x <= level for all i, s <= s_cap
    JointRows      // rows_i x + s <= level for all i
  };
  Kind kind = Kind::QuadLevel;
  Matrix S;
  Matrix rows;
  double level = 0.0;
  double s_cap = kInf;

  /// Worst constraint residual of (x, s); <= 0 means inside.
  double residual(const Vector& x, double s) const;
};

struct TerminalIngredients {
  Matrix P_f;
  Matrix K_f;
  double gamma = 0.0;      // terminal level (cost level or gauge level)
  double s_bar_f = 0.0;    // max terminal tube size
  double w_bar = kInf;     // max admissible uncertainty; kInf = unbounded
  double w_bar_min = 0.0;
  double s_bar = kInf;     // global tube cap sqrt(delta_loc); kInf = unbounded
  double N0_real = 1.0;    // minimal horizon before rounding
  int N0 = 1;
  std::vector<double> h_bar_f;  // one per Hoelder row, possibly empty
  TerminalSet set;
  KPoly alpha_f;  // continuity modulus of V_f on the terminal set

  bool w_bounded() const { return std::isfinite(w_bar); }
};

struct GenericTerminalOptions {
  int decrease_samples = 400;   // validity-level sampling for nonlinear models
  uint64_t seed = 7;
  double gamma_tol = 1e-8;      // bisection tolerance
  int envelope_samples = 4000;  // only used when no exact envelope exists
};

/// Standard terminal design from the origin linearization: LQR cost/gain,
/// largest terminal level gamma passing the tube-compatibility inequality,
/// then the closed-form s_bar_f / w_bar / N0 triple.
TerminalIngredients design_terminal_generic(const NominalModel& model,
                                            const StabilizabilityCertificate& cert,
                                            const StageCost& cost, const ConstraintSet& cs,
                                            const std::vector<double>& gains,
                                            const TubeBound& tb, int N,
                                            const GenericTerminalOptions& opts = {});

struct LpvTerminalOptions {
  /// Scale in (0, 1] applied to the 1/c_max level of the joint rows; smaller
  /// levels leave room for Hoelder terminal constants.
  double level_scale = 1.0;
};

/// Polytopic-certificate design: Lyapunov terminal cost, joint rows
/// P_i x + s <= level, unbounded w/s sentinels.
TerminalIngredients design_terminal_lpv(const NominalModel& model,
                                        const StabilizabilityCertificate& cert,
                                        const StageCost& cost, const ConstraintSet& cs,
                                        const std::vector<double>& gains, const TubeBound& tb,
                                        const LpvTerminalOptions& opts = {});

/// Constant-bound design: terminal gauge ball of level gamma = min_j 1/c_j - s_bar_f
/// with s_bar_f = (1-rho^N)/(1-rho) w_bar.
TerminalIngredients design_terminal_additive(const NominalModel& model,
                                             const StabilizabilityCertificate& cert,
                                             const StageCost& cost, const ConstraintSet& cs,
                                             const std::vector<double>& gains, double w_bar,
                                             int N);

/// Hoelder terminal constants h_bar_{j,f}; errors with a witness point when the
/// terminal set cannot absorb them.
void design_hoelder_terms(TerminalIngredients& ti, const StabilizabilityCertificate& cert,
                          const ConstraintSet& cs, const TubeBound& tb, int N, int samples,
                          uint64_t seed);

/// Continuous-time parametric recipe: s_bar_f = L_w/(c_max rho_c),
/// gamma = (rho_c - L_w)/(c_max rho_c), w_bar_c = gamma rho_c exp(rho_c T).
struct CtParametricDesign {
  double s_bar_f = 0.0;
  double gamma = 0.0;
  double w_bar_c = 0.0;
};
CtParametricDesign design_terminal_ct_parametric(double rho_c, double L_w, double c_max,
                                                 double T);

struct TerminalCheckReport {
  int samples = 0;
  double worst_decrease = -kInf;     // max of V_f(x+) - V_f(x) + l(x,k_f x)
  double worst_invariance = -kInf;   // max terminal-set residual of the successor
  double worst_tightening = -kInf;   // max of g_j(x,k_f x) + c_j s
  bool ok() const {
    return worst_decrease <= 1e-7 && worst_invariance <= 1e-7 && worst_tightening <= 1e-9;
  }
};

/// Samples the terminal decrease, robust invariance, and tightened-constraint
/// containment conditions on the designed set.
TerminalCheckReport check_terminal_conditions(const TerminalIngredients& ti,
                                              const NominalModel& model,
                                              const StabilizabilityCertificate& cert,
                                              const StageCost& cost, const ConstraintSet& cs,
                                              const std::vector<double>& gains,
                                              const TubeBound& tb, int N, int samples,
                                              uint64_t seed);

}  // namespace tubempc
