#pragma once

#include "tubempc/model.hpp"
#include "tubempc/types.hpp"

namespace tubempc {

enum class VdeltaShape { Quadratic, Polytopic };

/// Incremental stabilizability description: the tube metric V_delta, the
/// tracking feedback kappa(x,z,v) = v + K(x-z), and the scalar constants the
/// online scheme actually consumes. Certificates are inputs, loaded from
/// configuration; this module only derives constants from them.
struct StabilizabilityCertificate {
  VdeltaShape shape = VdeltaShape::Quadratic;
  Matrix P;     // quadratic: n x n SPD, V_delta = ||x-z||_P^2
  Matrix rows;  // polytopic: r x n, sqrt(V_delta) = max_i rows_i (x-z)
  Matrix K;     // m x n

  double rho = 0.0;
  double c_delta_l = 0.0;
  double c_delta_u = 0.0;
  double delta_loc = 0.0;
  double kappa_max = 0.0;

  int state_dim() const {
    return static_cast<int>(shape == VdeltaShape::Quadratic ? P.rows() : rows.cols());
  }
  double sqrt_vdelta(const Vector& x, const Vector& z) const;
  double vdelta(const Vector& x, const Vector& z) const {
    const double s = sqrt_vdelta(x, z);
    return s * s;
  }
  Vector kappa(const Vector& x, const Vector& z, const Vector& v) const {
    return v + K * (x - z);
  }
  double s_bar() const { return std::sqrt(delta_loc); }

  void validate() const;
};

struct CtCertificate {
  StabilizabilityCertificate base;  // rho field unused
  double rho_c = 0.0;
};

/// rho = exp(-rho_c h), all other constants copied.
StabilizabilityCertificate ct_to_dt(const CtCertificate& ct, double h);

/// Smallest rho with A_K * P_set inside rho * P_set, one LP per polytope row.
/// Sets *not_contractive when the result is >= 1.
double contraction_rate_polytopic(const Matrix& A_K, const Matrix& rows,
                                  bool* not_contractive = nullptr);

/// Constraint-tightening gains c_j for the tightened (affine/Lipschitz) rows.
/// Quadratic shape: c_j = L_j sqrt(1/c_delta_l + kappa_max).
/// Polytopic shape (affine rows): c_j = max_{x in P} (L_{j,x} + L_{j,u} K) x.
std::vector<double> compute_constraint_gains(const StabilizabilityCertificate& cert,
                                             const ConstraintSet& cs);

/// alpha_u(c) = alpha_c(c sqrt(1/c_delta_l + kappa_max)) as polynomial coefficients.
KPoly cost_increase_modulus(const StabilizabilityCertificate& cert, const StageCost& cost,
                            double set_radius);

struct CertificateReport {
  int samples = 0;
  double worst_ratio = 0.0;  // max over samples of sqrt(V+ / V)
  bool violated = false;     // worst_ratio > rho (1 + 1e-6)
  Vector witness_x, witness_z, witness_v;
};

/// Samples the one-step contraction condition under kappa; report-only.
CertificateReport validate_certificate(const StabilizabilityCertificate& cert,
                                       const NominalModel& model, const ConstraintSet& cs,
                                       int samples, uint64_t seed);

/// Vertices of {x | rows x <= 1} for small dimensions (exact enumeration).
std::vector<Vector> polytope_vertices(const Matrix& rows);

/// Uniform-ish sample from {x | sqrt_gauge(x) <= radius} for either shape.
Vector sample_vdelta_ball(const StabilizabilityCertificate& cert, double radius, Rng& rng);

}  // namespace tubempc
