#pragma once

#include "tubempc/certificate.hpp"
#include "tubempc/model.hpp"

namespace tubempc {

/// Scalar bound on the one-step mismatch, measured in the V_delta metric,
/// valid in a c-neighbourhood of a nominal point: w >= w_tilde(z,v) + L_w c.
struct TubeBound {
  enum class Kind { Constant, AffineInC, VertexMax, EllipsoidSup };
  Kind kind = Kind::Constant;

  double w_bar = 0.0;  // Constant
  double L_w = 0.0;    // slope in c (zero for Constant)

  // AffineInC: base(z,v); the bundled family is base = scale * (a + b ||z||).
  std::function<double(const Vector&, const Vector&)> base;
  double pin_a = 0.0, pin_b = 0.0, pin_scale = 1.0;
  bool pin_family = false;

  // VertexMax: w_tilde(z,v) = max_r (row_ax_r z + row_au_r v + row_b_r).
  Matrix row_ax, row_au;
  Vector row_b;

  // EllipsoidSup: w_tilde(z,v) = max_i ||Mx_i z + Mu_i v + off_i||_P + d_bar.
  std::vector<Matrix> ell_Mx, ell_Mu;
  std::vector<Vector> ell_off;  // reference offsets, one per vertex
  Matrix P;                     // metric of the quadratic certificate
  double d_bar = 0.0;

  double eps_smooth = 1e-4;  // norm smoothing inside differentiable solver paths
  double w_bar_min = 0.0;

  /// Exact (nonsmooth) evaluation; verification paths use this.
  double eval(const Vector& x, const Vector& u, double c) const;
  /// Smoothed evaluation used inside the online solver (>= exact value).
  double eval_smoothed(const Vector& x, const Vector& u, double c) const;

  bool linear() const { return kind == Kind::Constant || kind == Kind::VertexMax; }
  /// Number of inequality rows realizing w >= w_tilde_delta in the online problem.
  int num_rows() const;

  /// Test hook: scaled copy (0 gives the nominal problem).
  TubeBound scaled(double factor) const;
};

struct SampleSpec {
  int samples = 2000;
  uint64_t seed = 1;
};

/// Constant bound: sup over Z x W of the metric of the one-step mismatch.
/// Exact vertex enumeration where the structure allows it, sampled otherwise.
TubeBound build_constant_bound(const UncertaintyModel& um,
                               const StabilizabilityCertificate& cert,
                               const ConstraintSet& cs, int n, int m,
                               const SampleSpec& spec = {});

/// Lipschitz route: w_tilde_delta = sqrt(c_delta_u) w_hat(z,v)
///                  + c L sqrt(c_delta_u) sqrt(1/c_delta_l + kappa_max).
TubeBound build_lipschitz_bound(const CustomBound& um, const StabilizabilityCertificate& cert);
/// Same, for the parametric family w_hat = a + b||x||.
TubeBound build_lipschitz_bound_pin(double a, double b, const StabilizabilityCertificate& cert);

/// Polytopic certificate + LPV model: one affine row per (gauge row, theta
/// vertex); the simplified flag collapses the theta vertices into a single
/// summed row per gauge row (coincides with the full form for q = 1 with
/// symmetric rows).
TubeBound build_lpv_bound(const LpvUncertainty& um, const StabilizabilityCertificate& cert,
                          const ConstraintSet& cs, bool simplified = false);

/// Quadratic certificate + LPV model: vertex norms plus a spectral-norm slope.
TubeBound build_ellipsoid_bound(const LpvUncertainty& um,
                                const StabilizabilityCertificate& cert);

struct MonotonicityReport {
  int samples = 0;
  double worst_violation = 0.0;  // max of lhs - rhs over samples
  bool violated = false;
  Vector witness_z, witness_v;
  double witness_c1 = 0.0, witness_c2 = 0.0;
};

MonotonicityReport check_monotonicity(const TubeBound& tb,
                                      const StabilizabilityCertificate& cert,
                                      const ConstraintSet& cs, int n, int m, int samples,
                                      uint64_t seed);

struct SoundnessReport {
  int samples = 0;
  double worst_violation = 0.0;  // max of sqrt(V_delta(...)) - w_tilde_delta
  bool violated = false;
};

/// Samples the defining inequality of the bound: any mismatch arising in a
/// c-neighbourhood stays below w_tilde_delta(z,v,c) in the V_delta metric.
SoundnessReport check_soundness(const TubeBound& tb, const StabilizabilityCertificate& cert,
                                const UncertaintyModel& um, const NominalModel& model,
                                const ConstraintSet& cs, int samples, uint64_t seed);

}  // namespace tubempc
