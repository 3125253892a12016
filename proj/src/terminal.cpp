#include "tubempc/terminal.hpp"

#include <algorithm>
#include <cmath>

#include "tubempc/solvers.hpp"

namespace tubempc {

namespace {

double lambda_min(const Matrix& M) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(M, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

double lambda_max(const Matrix& M) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(M, Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

KPoly quad_level_modulus(const Matrix& P_f, double vf_level) {
  // V_f(z) - V_f(x) <= lmax r^2 + 2 sqrt(level * lmax) r on {V_f <= level}.
  const double lmax = lambda_max(P_f);
  return KPoly{{2.0 * std::sqrt(std::max(vf_level, 0.0) * lmax), lmax}};
}

/// Exact affine-in-(sqrt(gamma), s_bar_f) envelope coefficients (a0, a1, a2)
/// for sup over {V_f <= gamma, s <= s_bar_f} of w_tilde_delta(x, K_f x, s).
struct Envelope {
  double a0 = 0.0, a1 = 0.0, a2 = 0.0;
};

Envelope envelope_for(const TubeBound& tb, const Matrix& P_f, const Matrix& K_f,
                      const GenericTerminalOptions& opts) {
  Envelope e;
  e.a2 = tb.L_w;
  Eigen::SelfAdjointEigenSolver<Matrix> es(P_f);
  const Matrix Pf_inv_sqrt = es.operatorInverseSqrt();

  switch (tb.kind) {
    case TubeBound::Kind::Constant:
      e.a0 = tb.w_bar;
      return e;
    case TubeBound::Kind::VertexMax: {
      double a0 = 0.0, a1 = 0.0;
      for (int r = 0; r < tb.row_b.size(); ++r) {
        a0 = std::max(a0, tb.row_b[r]);
        const Vector row = tb.row_ax.row(r).transpose() +
                           K_f.transpose() * tb.row_au.row(r).transpose();
        a1 = std::max(a1, (Pf_inv_sqrt * row).norm());
      }
      e.a0 = a0;
      e.a1 = a1;
      return e;
    }
    case TubeBound::Kind::EllipsoidSup: {
      const Matrix Ps = [&] {
        Eigen::SelfAdjointEigenSolver<Matrix> esP(tb.P);
        return esP.operatorSqrt();
      }();
      double a1 = 0.0;
      for (size_t i = 0; i < tb.ell_Mx.size(); ++i) {
        Eigen::JacobiSVD<Matrix> svd(Ps * (tb.ell_Mx[i] + tb.ell_Mu[i] * K_f) * Pf_inv_sqrt);
        a1 = std::max(a1, svd.singularValues()[0]);
      }
      e.a0 = tb.d_bar;
      e.a1 = a1;
      return e;
    }
    case TubeBound::Kind::AffineInC: {
      if (tb.pin_family) {
        // sup of scale (a + b ||x||) over {V_f <= gamma}: ||x|| <= sqrt(gamma/lmin).
        e.a0 = tb.pin_scale * tb.pin_a;
        e.a1 = tb.pin_scale * tb.pin_b / std::sqrt(lambda_min(P_f));
        return e;
      }
      // Generic base: sampled least-max fit, then 1% inflation on a0.
      Rng rng(opts.seed);
      const int n = static_cast<int>(P_f.rows());
      double a0 = 0.0, a1 = 0.0;
      for (int s = 0; s < opts.envelope_samples; ++s) {
        Vector y = rng.unit_vector(n) * std::sqrt(rng.uniform());
        Vector x = Pf_inv_sqrt * y;  // V_f(x) <= 1
        const double val = tb.base(x, K_f * x);
        const double at0 = tb.base(Vector::Zero(n), Vector::Zero(K_f.rows()));
        a0 = std::max(a0, at0);
        const double r = std::sqrt(std::max(x.dot(P_f * x), 1e-12));
        a1 = std::max(a1, (val - at0) / r);
      }
      e.a0 = a0 * 1.01;
      e.a1 = std::max(a1, 0.0);
      return e;
    }
  }
  return e;
}

Vector sample_on_quad_level(const Matrix& P_f, double level, Rng& rng) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(P_f);
  const int n = static_cast<int>(P_f.rows());
  Vector y = rng.unit_vector(n) * std::sqrt(level * rng.uniform());
  return es.operatorInverseSqrt() * y;
}

}  // namespace

double TerminalSet::residual(const Vector& x, double s) const {
  double r = -kInf;
  switch (kind) {
    case Kind::QuadLevel:
      r = x.dot(S * x) - level;
      if (std::isfinite(s_cap)) r = std::max(r, s - s_cap);
      break;
    case Kind::PolyBallRows:
      for (int i = 0; i < rows.rows(); ++i) r = std::max(r, rows.row(i).dot(x) - level);
      if (std::isfinite(s_cap)) r = std::max(r, s - s_cap);
      break;
    case Kind::JointRows:
      for (int i = 0; i < rows.rows(); ++i) r = std::max(r, rows.row(i).dot(x) + s - level);
      break;
  }
  r = std::max(r, -s);  // tube sizes are nonnegative
  return r;
}

TerminalIngredients design_terminal_generic(const NominalModel& model,
                                            const StabilizabilityCertificate& cert,
                                            const StageCost& cost, const ConstraintSet& cs,
                                            const std::vector<double>& gains,
                                            const TubeBound& tb, int N,
                                            const GenericTerminalOptions& opts) {
  const Vector x0 = Vector::Zero(model.n);
  const Vector u0 = Vector::Zero(model.m);
  const Matrix A = model.step_jac_x(x0, u0);
  const Matrix B = model.step_jac_u(x0, u0);

  auto [K_f, P_lqr] = dlqr(A, B, cost.Q, cost.R);
  if (spectral_radius(A + B * K_f) >= 1.0 - 1e-9)
    throw DesignError("terminal: origin linearization not stabilizable");
  const Matrix Q_cl = cost.Q + K_f.transpose() * cost.R * K_f;
  const Matrix P_f = solve_discrete_lyapunov(A + B * K_f, Q_cl);

  const auto tightened = cs.tightened_indices();
  require(gains.size() == tightened.size(), "terminal: one gain per tightened row required");

  // Level cap from the constraint margins: f_j(gamma) <= -g_j(0,0) = 1.
  const double lmin_joint = cost.lambda_min_joint();
  double gamma_cap = kInf;
  for (size_t j = 0; j < tightened.size(); ++j) {
    const double Lj = constraint_lipschitz(cs, tightened[j]);
    if (Lj > 0.0) gamma_cap = std::min(gamma_cap, lmin_joint / (Lj * Lj));
  }
  require(std::isfinite(gamma_cap), "terminal: no constraint bounds the level");

  // Local validity of the Lyapunov decrease for nonlinear models, by sampling.
  double gamma_bar = gamma_cap;
  if (!model.linear) {
    Rng rng(opts.seed);
    while (gamma_bar > 1e-12) {
      bool ok = true;
      for (int s = 0; s < opts.decrease_samples && ok; ++s) {
        Vector x = sample_on_quad_level(P_f, gamma_bar, rng);
        Vector u = K_f * x;
        Vector xp = model.step(x, u);
        const double dec = xp.dot(P_f * xp) - x.dot(P_f * x) + cost.eval(x, u);
        if (dec > 1e-9 * (1.0 + x.dot(P_f * x))) ok = false;
      }
      if (ok) break;
      gamma_bar *= 0.5;
    }
    require(gamma_bar > 1e-12, "terminal: decrease condition fails at every tested level");
  }

  const Envelope env = envelope_for(tb, P_f, K_f, opts);
  if (env.a2 >= 1.0 - cert.rho)
    throw DesignError("terminal: tube slope too steep, a2 = " + std::to_string(env.a2) +
                      " >= 1 - rho = " + std::to_string(1.0 - cert.rho));

  const double s_bar = cert.s_bar();
  auto rhs_margin = [&](double gamma) {
    double mj = kInf;
    for (size_t j = 0; j < tightened.size(); ++j) {
      const double Lj = constraint_lipschitz(cs, tightened[j]);
      const double fj = Lj * std::sqrt(gamma / lmin_joint);
      if (gains[j] > 0.0) mj = std::min(mj, (1.0 - fj) / gains[j]);
    }
    return std::min(mj, s_bar);
  };
  auto feasible = [&](double gamma) {
    const double lhs = (env.a0 + env.a1 * std::sqrt(gamma)) / (1.0 - cert.rho - env.a2);
    const double rhs = rhs_margin(gamma);
    return rhs >= 0.0 && lhs <= rhs;
  };

  if (!feasible(1e-14)) {
    throw DesignError(
        "terminal: no feasible level, base uncertainty alone exceeds the constraint margin "
        "(a0/(1-rho-a2) = " +
        std::to_string(env.a0 / (1.0 - cert.rho - env.a2)) + ")");
  }
  double lo = 1e-14, hi = gamma_bar;
  double gamma;
  if (feasible(hi)) {
    gamma = hi;
  } else {
    while (hi - lo > opts.gamma_tol * std::max(1.0, hi)) {
      const double mid = 0.5 * (lo + hi);
      (feasible(mid) ? lo : hi) = mid;
    }
    gamma = lo;
  }

  // Monotone-gap check for the w_bar formula: id - alpha_l o alpha_f^{-1} must
  // be class-K on [0, gamma_bar]; error out instead of constructing a substitute.
  KPoly alpha_f = quad_level_modulus(P_f, gamma);
  {
    double prev = 0.0;
    for (int i = 1; i <= 64; ++i) {
      const double t = gamma_bar * i / 64.0;
      const double g = t - lmin_joint * std::pow(alpha_f.inverse(t), 2);
      if (g < prev - 1e-12 || g < -1e-12)
        throw DesignError("terminal: id - alpha_l o alpha_f^{-1} not class-K on the level range");
      prev = g;
    }
  }

  TerminalIngredients ti;
  ti.P_f = P_f;
  ti.K_f = K_f;
  ti.gamma = gamma;
  ti.alpha_f = alpha_f;
  ti.s_bar = s_bar;
  ti.w_bar_min = tb.w_bar_min;
  ti.s_bar_f = rhs_margin(gamma);

  const double X = alpha_f.inverse(lmin_joint * std::pow(alpha_f.inverse(gamma), 2));
  ti.w_bar = std::pow(cert.rho, -N) * std::sqrt(cert.c_delta_l) * X;
  ti.N0_real = ti.s_bar_f > 1e-12
                   ? std::log(std::sqrt(cert.c_delta_l) * X / ((1.0 - cert.rho) * ti.s_bar_f)) /
                         std::log(cert.rho)
                   : 1.0;  // uncertainty-free limit: any horizon works
  ti.N0 = std::max(1, static_cast<int>(std::ceil(ti.N0_real - 1e-12)));
  if (N < ti.N0)
    throw DesignError("terminal: horizon too short, need N >= " + std::to_string(ti.N0));
  if (ti.w_bar < ti.w_bar_min)
    throw DesignError("terminal: admissible cap w_bar = " + std::to_string(ti.w_bar) +
                      " below w_bar_min; increase the horizon");

  ti.set.kind = TerminalSet::Kind::QuadLevel;
  ti.set.S = P_f;
  ti.set.level = gamma;
  ti.set.s_cap = ti.s_bar_f;
  return ti;
}

TerminalIngredients design_terminal_lpv(const NominalModel& model,
                                        const StabilizabilityCertificate& cert,
                                        const StageCost& cost, const ConstraintSet& cs,
                                        const std::vector<double>& gains, const TubeBound& tb,
                                        const LpvTerminalOptions& opts) {
  require(model.linear, "lpv terminal: nominal model must be LTI");
  require(cert.shape == VdeltaShape::Polytopic, "lpv terminal: polytopic certificate required");
  require(tb.kind == TubeBound::Kind::VertexMax, "lpv terminal: vertex-max tube bound required");
  require(!gains.empty(), "lpv terminal: constraint gains required");
  require(opts.level_scale > 0.0 && opts.level_scale <= 1.0,
          "lpv terminal: level scale must lie in (0, 1]");

  const double c_max = *std::max_element(gains.begin(), gains.end());
  require(c_max > 0.0, "lpv terminal: all gains are zero");
  const double d_bar = tb.d_bar;
  const double sum = cert.rho + tb.L_w + c_max * d_bar;
  if (sum > 1.0)
    throw DesignError("lpv terminal: rho + L_w + c_max*d_bar = " + std::to_string(sum) +
                      " exceeds 1");

  const Matrix A_K = model.A + model.B * cert.K;
  if (spectral_radius(A_K) >= 1.0 - 1e-9)
    throw DesignError("lpv terminal: closed loop not Schur under the certificate feedback");

  TerminalIngredients ti;
  ti.K_f = cert.K;
  ti.P_f = solve_discrete_lyapunov(A_K, cost.Q + cert.K.transpose() * cost.R * cert.K);

  const double level = opts.level_scale / c_max;
  // Shrunk levels must still absorb the additive part: (1-rho-L_w) level >= d_bar.
  if ((1.0 - cert.rho - tb.L_w) * level < d_bar - 1e-12)
    throw DesignError("lpv terminal: level " + std::to_string(level) +
                      " too small for the additive disturbance");

  ti.gamma = level;
  ti.s_bar_f = level;
  ti.w_bar = kInf;
  // The gauge contracts globally, so no cap is needed; a finite declared
  // delta_loc still bounds the region where the other scalar bounds hold.
  ti.s_bar = std::isfinite(cert.delta_loc) ? cert.s_bar() : kInf;
  ti.w_bar_min = tb.w_bar_min;
  ti.N0_real = 1.0;
  ti.N0 = 1;
  ti.set.kind = TerminalSet::Kind::JointRows;
  ti.set.rows = cert.rows;
  ti.set.level = level;
  ti.set.s_cap = kInf;

  // Continuity modulus of V_f on the terminal slice {max_i P_i x <= level}.
  double vf_max = 0.0;
  if (cert.rows.cols() <= 4) {
    for (const auto& v : polytope_vertices(cert.rows)) {
      const Vector xv = level * v;
      vf_max = std::max(vf_max, xv.dot(ti.P_f * xv));
    }
  } else {
    vf_max = lambda_max(ti.P_f) * level * level;  // via an outer norm bound
  }
  ti.alpha_f = quad_level_modulus(ti.P_f, vf_max);
  return ti;
}

TerminalIngredients design_terminal_additive(const NominalModel& model,
                                             const StabilizabilityCertificate& cert,
                                             const StageCost& cost, const ConstraintSet& cs,
                                             const std::vector<double>& gains, double w_bar,
                                             int N) {
  require(w_bar >= 0.0, "additive terminal: negative disturbance bound");
  const auto tightened = cs.tightened_indices();
  require(gains.size() == tightened.size(), "additive terminal: one gain per tightened row");

  const double rho = cert.rho;
  const double s_bar_f = (1.0 - std::pow(rho, N)) / (1.0 - rho) * w_bar;
  if (s_bar_f > cert.s_bar() + 1e-12)
    throw DesignError("additive terminal: accumulated tube " + std::to_string(s_bar_f) +
                      " exceeds sqrt(delta_loc) = " + std::to_string(cert.s_bar()));

  double gamma = kInf;
  for (double cj : gains)
    if (cj > 0.0) gamma = std::min(gamma, (1.0 - cj * s_bar_f) / cj);
  require(std::isfinite(gamma), "additive terminal: no positive gain to set the level");
  if (gamma <= 0.0)
    throw DesignError("additive terminal: tightened margin nonpositive (gamma = " +
                      std::to_string(gamma) + ")");

  // Robust invariance of the gauge ball: rho^N w_bar <= (1 - rho) gamma.
  const double rpi_gap = std::pow(rho, N) * w_bar - (1.0 - rho) * gamma;
  if (rpi_gap > 1e-12)
    throw DesignError("additive terminal: invariance margin violated by " +
                      std::to_string(rpi_gap));

  const Vector x0 = Vector::Zero(model.n);
  const Vector u0 = Vector::Zero(model.m);
  const Matrix A = model.step_jac_x(x0, u0);
  const Matrix B = model.step_jac_u(x0, u0);
  Matrix K_f = cert.K;
  Matrix A_K = A + B * K_f;
  if (spectral_radius(A_K) >= 1.0 - 1e-9) {
    // The certificate feedback may be unavailable for the linearization; fall
    // back to an LQR terminal gain.
    std::tie(K_f, std::ignore) = dlqr(A, B, cost.Q, cost.R);
    A_K = A + B * K_f;
  }

  TerminalIngredients ti;
  ti.K_f = K_f;
  ti.P_f = solve_discrete_lyapunov(A_K, cost.Q + K_f.transpose() * cost.R * K_f);
  ti.gamma = gamma;
  ti.s_bar_f = s_bar_f;
  ti.w_bar = w_bar;
  ti.w_bar_min = w_bar;
  ti.s_bar = cert.s_bar();
  ti.N0_real = 1.0;
  ti.N0 = 1;

  if (cert.shape == VdeltaShape::Quadratic) {
    ti.set.kind = TerminalSet::Kind::QuadLevel;
    ti.set.S = cert.P;
    ti.set.level = gamma * gamma;
  } else {
    ti.set.kind = TerminalSet::Kind::PolyBallRows;
    ti.set.rows = cert.rows;
    ti.set.level = gamma;
  }
  ti.set.s_cap = s_bar_f * (1.0 + 1e-12) + 1e-15;

  double vf_max = lambda_max(ti.P_f) * gamma * gamma /
                  (cert.shape == VdeltaShape::Quadratic ? lambda_min(cert.P) : 1.0);
  ti.alpha_f = quad_level_modulus(ti.P_f, vf_max);
  return ti;
}

void design_hoelder_terms(TerminalIngredients& ti, const StabilizabilityCertificate& cert,
                          const ConstraintSet& cs, const TubeBound& tb, int N, int samples,
                          uint64_t seed) {
  const auto hoelder = cs.hoelder_indices();
  ti.h_bar_f.clear();
  if (hoelder.empty()) return;
  require(std::isfinite(ti.w_bar_min), "hoelder terminal: w_bar_min required");

  const double rho = cert.rho;
  const double factor = std::sqrt(1.0 / cert.c_delta_l + cert.kappa_max);
  Rng rng(seed);

  // Sample the terminal set (x, s).
  std::vector<std::pair<Vector, double>> pts;
  const int n = static_cast<int>(ti.K_f.cols());
  for (int s = 0; s < samples; ++s) {
    Vector x;
    double sv = 0.0;
    switch (ti.set.kind) {
      case TerminalSet::Kind::QuadLevel: {
        Eigen::SelfAdjointEigenSolver<Matrix> es(ti.set.S);
        Vector y = rng.unit_vector(n) * std::sqrt(ti.set.level * rng.uniform());
        x = es.operatorInverseSqrt() * y;
        sv = std::isfinite(ti.set.s_cap) ? rng.uniform(0.0, ti.set.s_cap) : 0.0;
        break;
      }
      case TerminalSet::Kind::PolyBallRows: {
        StabilizabilityCertificate gauge = cert;
        gauge.shape = VdeltaShape::Polytopic;
        gauge.rows = ti.set.rows;
        x = sample_vdelta_ball(gauge, ti.set.level, rng);
        sv = std::isfinite(ti.set.s_cap) ? rng.uniform(0.0, ti.set.s_cap) : 0.0;
        break;
      }
      case TerminalSet::Kind::JointRows: {
        StabilizabilityCertificate gauge = cert;
        gauge.shape = VdeltaShape::Polytopic;
        gauge.rows = ti.set.rows;
        x = sample_vdelta_ball(gauge, ti.set.level, rng);
        double gx = 0.0;
        for (int i = 0; i < ti.set.rows.rows(); ++i)
          gx = std::max(gx, ti.set.rows.row(i).dot(x));
        sv = rng.uniform(0.0, std::max(ti.set.level - gx, 0.0));
        break;
      }
    }
    pts.emplace_back(x, sv);
  }

  for (int j : hoelder) {
    const auto& hc = std::get<HoelderConstraint>(cs.items[j]);
    const double lam = hc.lambda;
    const double c_comp = hc.c_tilde * std::pow(factor, lam);  // composed modulus coefficient
    auto alpha = [&](double r) { return c_comp * std::pow(std::max(r, 0.0), lam); };

    double sup_alpha_w = 0.0;
    for (const auto& [x, sv] : pts)
      sup_alpha_w = std::max(sup_alpha_w, alpha(tb.eval(x, ti.K_f * x, sv)));

    const double rho_lam = std::pow(rho, lam);
    const double tail = rho_lam * alpha(std::pow(rho, N - 1) * ti.w_bar_min);
    const double h_bar = (sup_alpha_w - tail) / (1.0 - rho_lam);
    if (h_bar < 0.0) {
      ti.h_bar_f.push_back(0.0);
      continue;
    }

    for (const auto& [x, sv] : pts) {
      const double g = hc.g(x, ti.K_f * x);
      if (g + h_bar > 1e-9) {
        throw DesignError("hoelder terminal: g~ + h_bar = " + std::to_string(g + h_bar) +
                          " > 0 at a terminal-set sample (|x| = " +
                          std::to_string(x.norm()) + ")");
      }
    }
    ti.h_bar_f.push_back(h_bar);
  }
}

CtParametricDesign design_terminal_ct_parametric(double rho_c, double L_w, double c_max,
                                                 double T) {
  require(rho_c > 0.0 && c_max > 0.0 && T > 0.0, "ct parametric terminal: positive data required");
  if (L_w >= rho_c)
    throw DesignError("ct parametric terminal: L_w >= rho_c, tube diverges");
  CtParametricDesign out;
  out.s_bar_f = L_w / (c_max * rho_c);
  out.gamma = (rho_c - L_w) / (c_max * rho_c);
  out.w_bar_c = out.gamma * rho_c * std::exp(rho_c * T);
  return out;
}

TerminalCheckReport check_terminal_conditions(const TerminalIngredients& ti,
                                              const NominalModel& model,
                                              const StabilizabilityCertificate& cert,
                                              const StageCost& cost, const ConstraintSet& cs,
                                              const std::vector<double>& gains,
                                              const TubeBound& tb, int N, int samples,
                                              uint64_t seed) {
  TerminalCheckReport rep;
  Rng rng(seed);
  const int n = model.n;
  const auto tightened = cs.tightened_indices();
  const double w_hi = ti.w_bounded() ? ti.w_bar : tb.eval(Vector::Zero(n),
                                                          Vector::Zero(model.m), ti.gamma);

  for (int s = 0; s < samples; ++s) {
    Vector x;
    double sv = 0.0;
    if (ti.set.kind == TerminalSet::Kind::QuadLevel) {
      Eigen::SelfAdjointEigenSolver<Matrix> es(ti.set.S);
      Vector y = rng.unit_vector(n) * std::sqrt(ti.set.level * rng.uniform());
      x = es.operatorInverseSqrt() * y;
      sv = std::isfinite(ti.set.s_cap) ? rng.uniform(0.0, ti.set.s_cap) : 0.0;
    } else {
      StabilizabilityCertificate gauge = cert;
      gauge.shape = VdeltaShape::Polytopic;
      gauge.rows = ti.set.rows;
      x = sample_vdelta_ball(gauge, ti.set.level, rng);
      if (ti.set.kind == TerminalSet::Kind::JointRows) {
        double gx = 0.0;
        for (int i = 0; i < ti.set.rows.rows(); ++i)
          gx = std::max(gx, ti.set.rows.row(i).dot(x));
        sv = rng.uniform(0.0, std::max(ti.set.level - gx, 0.0));
      } else {
        sv = std::isfinite(ti.set.s_cap) ? rng.uniform(0.0, ti.set.s_cap) : 0.0;
      }
    }
    ++rep.samples;

    const Vector u = ti.K_f * x;
    const Vector xp = model.step(x, u);

    const double dec = xp.dot(ti.P_f * xp) - x.dot(ti.P_f * x) + cost.eval(x, u);
    rep.worst_decrease = std::max(rep.worst_decrease, dec);

    for (size_t j = 0; j < tightened.size(); ++j) {
      const double g = eval_constraint(cs, tightened[j], x, u) + gains[j] * sv;
      rep.worst_tightening = std::max(rep.worst_tightening, g);
    }

    // One-step invariance with a worst-case metric perturbation of size rho^N w.
    const double w = ti.w_bounded() ? rng.uniform(ti.w_bar_min, ti.w_bar)
                                    : rng.uniform(ti.w_bar_min, w_hi);
    const double pert = std::pow(cert.rho, N) * w;
    Vector d = sample_vdelta_ball(cert, pert, rng);
    const double wd = tb.eval(x, u, sv);
    const double sp_hi = std::max(cert.rho * sv - pert + wd, 0.0);
    const double sp = rng.uniform(0.0, sp_hi);
    rep.worst_invariance = std::max(rep.worst_invariance, ti.set.residual(xp + d, sp));
  }
  return rep;
}

}  // namespace tubempc
