#include "tubempc/ocp.hpp"

#include <algorithm>
#include <cmath>

namespace tubempc {

double Design::tube_decay() const {
  if (!ct_tube) return cert.rho;
  return std::exp(-(rho_c - tube.L_w) * model.h);
}

double Design::tube_gain() const {
  if (!ct_tube) return 1.0;
  const double a = rho_c - tube.L_w;
  return (1.0 - std::exp(-a * model.h)) / a;
}

double Design::row_slope() const { return ct_tube ? 0.0 : tube.L_w; }

double propagate_tube(double s, double w, double rho) {
  require(s >= 0.0 && w >= 0.0, "propagate_tube: negative tube inputs");
  return rho * s + w;
}

double tighten(double g_val, double c_j, double s) {
  require(c_j >= 0.0 && s >= 0.0, "tighten: negative gain or tube size");
  return g_val + c_j * s;
}

double propagate_h(double h, double w, double rho, double c_tilde, double lambda) {
  require(h >= 0.0 && w >= 0.0, "propagate_h: negative inputs");
  return std::pow(rho, lambda) * h + c_tilde * std::pow(w, lambda);
}

double discretize_tube_ct(double s, double w0, double rho_c, double L_w, double h) {
  require(h > 0.0, "discretize_tube_ct: step must be positive");
  require(L_w >= 0.0, "discretize_tube_ct: negative slope");
  if (rho_c <= L_w)
    throw DesignError("discretize_tube_ct: rho_c <= L_w, the tube dynamics diverge");
  const double a = rho_c - L_w;
  return std::exp(-a * h) * s + (1.0 - std::exp(-a * h)) / a * w0;
}

namespace {

constexpr double kTubeReg = 1e-9;  // strict convexity in (w, s); below test tolerances

struct RowData {
  // Tube-bound rows as linear data (valid when tube.linear()).
  Matrix ax, au;
  Vector b;
};

RowData linear_rows(const TubeBound& tb, int n, int m) {
  RowData r;
  if (tb.kind == TubeBound::Kind::Constant) {
    r.ax = Matrix::Zero(1, n);
    r.au = Matrix::Zero(1, m);
    r.b = Vector::Constant(1, tb.w_bar);
  } else {
    r.ax = tb.row_ax;
    r.au = tb.row_au;
    r.b = tb.row_b;
  }
  return r;
}

// Composed Hoelder modulus coefficient for row j.
double composed_c_tilde(const HoelderConstraint& hc, const StabilizabilityCertificate& cert) {
  const double factor = std::sqrt(1.0 / cert.c_delta_l + cert.kappa_max);
  return hc.c_tilde * std::pow(factor, hc.lambda);
}

Vector fd_grad_xu(const std::function<double(const Vector&, const Vector&)>& g, const Vector& x,
                  const Vector& u) {
  const int n = static_cast<int>(x.size()), m = static_cast<int>(u.size());
  Vector out(n + m);
  const double eps = 1e-6;
  Vector xp = x, xm = x, up = u, um = u;
  for (int j = 0; j < n; ++j) {
    xp[j] += eps;
    xm[j] -= eps;
    out[j] = (g(xp, u) - g(xm, u)) / (2.0 * eps);
    xp[j] = x[j];
    xm[j] = x[j];
  }
  for (int j = 0; j < m; ++j) {
    up[j] += eps;
    um[j] -= eps;
    out[n + j] = (g(x, up) - g(x, um)) / (2.0 * eps);
    up[j] = u[j];
    um[j] = u[j];
  }
  return out;
}

bool qp_eligible(const Design& d) {
  if (!d.model.linear) return false;
  if (!d.constraints.all_affine_tightened()) return false;
  if (!d.constraints.hoelder_indices().empty()) return false;
  if (d.mode == OcpMode::FullTube && !d.tube.linear()) return false;
  if (d.mode == OcpMode::AdditiveOffline && d.tube.kind != TubeBound::Kind::Constant)
    throw Error("ocp: additive-offline mode requires a constant tube bound");
  if (d.terminal.set.kind == TerminalSet::Kind::QuadLevel) return false;
  return true;
}

// Offline tube profile for the additive mode.
double offline_s(const Design& d, int k) {
  const double rho = d.cert.rho;
  return (1.0 - std::pow(rho, k)) / (1.0 - rho) * d.tube.w_bar;
}

}  // namespace

AssembledOcp assemble(const OcpSpec& spec) {
  require(spec.design != nullptr, "ocp: missing design");
  const Design& d = *spec.design;
  require_dims(spec.x0.size() == d.model.n, "ocp: initial state dimension mismatch");
  if (d.mode == OcpMode::AdditiveOffline) {
    require(d.tube.kind == TubeBound::Kind::Constant,
            "ocp: additive-offline mode requires a constant tube bound");
    require(d.terminal.set.kind != TerminalSet::Kind::JointRows,
            "ocp: additive-offline mode cannot take a joint (x, s) terminal set");
  }

  AssembledOcp out;
  VarLayout& L = out.layout;
  L.N = d.N;
  L.n = d.model.n;
  L.m = d.model.m;
  L.q = static_cast<int>(d.constraints.hoelder_indices().size());
  L.full = d.mode == OcpMode::FullTube;

  const int N = L.N, n = L.n, m = L.m, q = L.q;
  const int ntot = L.total();
  const auto tightened = d.constraints.tightened_indices();
  const auto hoelder = d.constraints.hoelder_indices();
  const double scale = spec.tube_scale;
  const TubeBound tube = (scale == 1.0) ? d.tube : d.tube.scaled(scale);
  const double decay = d.tube_decay();
  const double gain = d.tube_gain();
  const double slope = d.ct_tube ? 0.0 : tube.L_w;
  const double w_cap = d.terminal.w_bounded() ? d.terminal.w_bar * scale : kInf;
  const double s_cap_global = std::isfinite(d.terminal.s_bar) ? d.terminal.s_bar : kInf;

  out.is_qp = qp_eligible(d);

  // Bounds (shared by both paths).
  Vector lb = Vector::Constant(ntot, -kInf);
  Vector ub = Vector::Constant(ntot, kInf);
  if (L.full) {
    for (int k = 0; k < N; ++k) {
      lb[L.w(k)] = 0.0;
      if (std::isfinite(w_cap)) ub[L.w(k)] = w_cap;
      lb[L.s(k)] = 0.0;
      if (std::isfinite(s_cap_global)) ub[L.s(k)] = s_cap_global;
      for (int j = 0; j < q; ++j) lb[L.h(j, k)] = 0.0;
    }
    lb[L.s(N)] = 0.0;
    double s_term_cap = s_cap_global;
    if (std::isfinite(d.terminal.set.s_cap))
      s_term_cap = std::min(s_term_cap, d.terminal.set.s_cap * scale + 1e-12);
    if (std::isfinite(s_term_cap)) ub[L.s(N)] = s_term_cap;
    for (int j = 0; j < q; ++j) {
      lb[L.h(j, N)] = 0.0;
      if (j < static_cast<int>(d.terminal.h_bar_f.size()))
        ub[L.h(j, N)] = d.terminal.h_bar_f[j];
    }
  }

  if (out.is_qp) {
    QpProblem& qp = out.qp;
    qp.H = Matrix::Zero(ntot, ntot);
    qp.c = Vector::Zero(ntot);
    for (int k = 0; k < N; ++k) {
      qp.H.block(L.x(k), L.x(k), n, n) = 2.0 * d.cost.Q;
      qp.H.block(L.u(k), L.u(k), m, m) = 2.0 * d.cost.R;
      if (L.full) {
        qp.H(L.w(k), L.w(k)) = 2.0 * kTubeReg;
        qp.H(L.s(k), L.s(k)) = 2.0 * kTubeReg;
      }
    }
    qp.H.block(L.x(N), L.x(N), n, n) = 2.0 * d.terminal.P_f;
    if (L.full) qp.H(L.s(N), L.s(N)) = 2.0 * kTubeReg;

    // Equalities: init, dynamics, tube.
    const int me = n + (L.full ? 1 : 0) + N * (n + (L.full ? 1 : 0));
    qp.A_eq = Matrix::Zero(me, ntot);
    qp.b_eq = Vector::Zero(me);
    int r = 0;
    qp.A_eq.block(r, L.x(0), n, n) = Matrix::Identity(n, n);
    qp.b_eq.segment(r, n) = spec.x0;
    r += n;
    if (L.full) qp.A_eq(r++, L.s(0)) = 1.0;  // s_0 = 0
    for (int k = 0; k < N; ++k) {
      qp.A_eq.block(r, L.x(k + 1), n, n) = Matrix::Identity(n, n);
      qp.A_eq.block(r, L.x(k), n, n) = -d.model.A;
      qp.A_eq.block(r, L.u(k), n, m) = -d.model.B;
      r += n;
      if (L.full) {
        qp.A_eq(r, L.s(k + 1)) = 1.0;
        qp.A_eq(r, L.s(k)) = -decay;
        qp.A_eq(r, L.w(k)) = -gain;
        ++r;
      }
    }

    // Inequalities: w-rows + tightened constraints per stage, then terminal.
    RowData rows = L.full ? linear_rows(tube, n, m) : RowData{};
    const int nwrows = L.full ? static_cast<int>(rows.b.size()) : 0;
    const int p = static_cast<int>(tightened.size());
    int mterm = 0;
    if (d.terminal.set.kind == TerminalSet::Kind::PolyBallRows ||
        d.terminal.set.kind == TerminalSet::Kind::JointRows)
      mterm = static_cast<int>(d.terminal.set.rows.rows());
    const int mi = N * (nwrows + p) + mterm;
    qp.A_ub = Matrix::Zero(mi, ntot);
    qp.b_ub = Vector::Zero(mi);
    r = 0;
    for (int k = 0; k < N; ++k) {
      for (int i = 0; i < nwrows; ++i, ++r) {
        qp.A_ub.row(r).segment(L.x(k), n) = rows.ax.row(i);
        qp.A_ub.row(r).segment(L.u(k), m) = rows.au.row(i);
        qp.A_ub(r, L.s(k)) += slope;
        qp.A_ub(r, L.w(k)) = -1.0;
        qp.b_ub[r] = -rows.b[i];
      }
      for (int jj = 0; jj < p; ++jj, ++r) {
        const auto& a = std::get<AffineConstraint>(d.constraints.items[tightened[jj]]);
        qp.A_ub.row(r).segment(L.x(k), n) = a.Lx.transpose();
        qp.A_ub.row(r).segment(L.u(k), m) = a.Lu.transpose();
        if (L.full) {
          qp.A_ub(r, L.s(k)) += d.gains[jj];
          qp.b_ub[r] = 1.0;
        } else {
          qp.b_ub[r] = 1.0 - d.gains[jj] * offline_s(d, k) * scale;
        }
      }
    }
    for (int i = 0; i < mterm; ++i, ++r) {
      qp.A_ub.row(r).segment(L.x(N), n) = d.terminal.set.rows.row(i);
      if (L.full && d.terminal.set.kind == TerminalSet::Kind::JointRows)
        qp.A_ub(r, L.s(N)) = 1.0;
      qp.b_ub[r] = d.terminal.set.level;
    }
    qp.lb = lb;
    qp.ub = ub;
    return out;
  }

  // --- Nonlinear path -------------------------------------------------------
  NlpProblem& nl = out.nlp;
  const Design* dp = spec.design;
  const VarLayout lay = L;
  const TubeBound tb = tube;
  const Vector x0 = spec.x0;
  const double dslope = slope;

  // The objective is quadratic; hand its exact Hessian to the SQP layer.
  nl.hessian = Matrix::Zero(ntot, ntot);
  for (int k = 0; k < N; ++k) {
    nl.hessian.block(L.x(k), L.x(k), n, n) = 2.0 * d.cost.Q;
    nl.hessian.block(L.u(k), L.u(k), m, m) = 2.0 * d.cost.R;
    if (L.full) {
      nl.hessian(L.w(k), L.w(k)) = 2.0 * kTubeReg;
      nl.hessian(L.s(k), L.s(k)) = 2.0 * kTubeReg;
    }
  }
  nl.hessian.block(L.x(N), L.x(N), n, n) = 2.0 * d.terminal.P_f;
  if (L.full) nl.hessian(L.s(N), L.s(N)) = 2.0 * kTubeReg;

  nl.objective = [dp, lay](const Vector& z) {
    const Design& dd = *dp;
    double v = 0.0;
    for (int k = 0; k < lay.N; ++k) {
      const Vector xk = z.segment(lay.x(k), lay.n);
      const Vector uk = z.segment(lay.u(k), lay.m);
      v += dd.cost.eval(xk, uk);
      if (lay.full) {
        v += kTubeReg * (z[lay.w(k)] * z[lay.w(k)] + z[lay.s(k)] * z[lay.s(k)]);
      }
    }
    const Vector xN = z.segment(lay.x(lay.N), lay.n);
    v += xN.dot(dd.terminal.P_f * xN);
    if (lay.full) v += kTubeReg * z[lay.s(lay.N)] * z[lay.s(lay.N)];
    return v;
  };
  nl.gradient = [dp, lay](const Vector& z) {
    const Design& dd = *dp;
    Vector g = Vector::Zero(z.size());
    for (int k = 0; k < lay.N; ++k) {
      const Vector xk = z.segment(lay.x(k), lay.n);
      const Vector uk = z.segment(lay.u(k), lay.m);
      g.segment(lay.x(k), lay.n) += 2.0 * dd.cost.Q * xk;
      g.segment(lay.u(k), lay.m) += 2.0 * dd.cost.R * uk;
      if (lay.full) {
        g[lay.w(k)] += 2.0 * kTubeReg * z[lay.w(k)];
        g[lay.s(k)] += 2.0 * kTubeReg * z[lay.s(k)];
      }
    }
    g.segment(lay.x(lay.N), lay.n) += 2.0 * dd.terminal.P_f * z.segment(lay.x(lay.N), lay.n);
    if (lay.full) g[lay.s(lay.N)] += 2.0 * kTubeReg * z[lay.s(lay.N)];
    return g;
  };

  const auto hrows = hoelder;
  const double decay_c = decay, gain_c = gain;
  nl.eq = [dp, lay, x0, hrows, decay_c, gain_c](const Vector& z) {
    const Design& dd = *dp;
    const int n = lay.n, N = lay.N, q = lay.q;
    const int me = n + (lay.full ? 1 + q : 0) + N * (n + (lay.full ? 1 + q : 0));
    Vector ce(me);
    int r = 0;
    ce.segment(r, n) = z.segment(lay.x(0), n) - x0;
    r += n;
    if (lay.full) {
      ce[r++] = z[lay.s(0)];
      for (int j = 0; j < q; ++j) ce[r++] = z[lay.h(j, 0)];
    }
    for (int k = 0; k < N; ++k) {
      const Vector xk = z.segment(lay.x(k), n);
      const Vector uk = z.segment(lay.u(k), lay.m);
      ce.segment(r, n) = z.segment(lay.x(k + 1), n) - dd.model.step(xk, uk);
      r += n;
      if (lay.full) {
        ce[r++] = z[lay.s(k + 1)] - decay_c * z[lay.s(k)] - gain_c * z[lay.w(k)];
        for (int j = 0; j < q; ++j) {
          const auto& hc = std::get<HoelderConstraint>(dd.constraints.items[hrows[j]]);
          const double ct = composed_c_tilde(hc, dd.cert);
          ce[r++] = z[lay.h(j, k + 1)] - std::pow(dd.cert.rho, hc.lambda) * z[lay.h(j, k)] -
                    ct * std::pow(std::max(z[lay.w(k)], 0.0), hc.lambda);
        }
      }
    }
    return ce;
  };
  nl.eq_jac = [dp, lay, hrows, decay_c, gain_c](const Vector& z) {
    const Design& dd = *dp;
    const int n = lay.n, N = lay.N, q = lay.q, m = lay.m;
    const int me = n + (lay.full ? 1 + q : 0) + N * (n + (lay.full ? 1 + q : 0));
    Matrix J = Matrix::Zero(me, z.size());
    int r = 0;
    J.block(r, lay.x(0), n, n) = Matrix::Identity(n, n);
    r += n;
    if (lay.full) {
      J(r++, lay.s(0)) = 1.0;
      for (int j = 0; j < q; ++j) J(r++, lay.h(j, 0)) = 1.0;
    }
    for (int k = 0; k < N; ++k) {
      const Vector xk = z.segment(lay.x(k), n);
      const Vector uk = z.segment(lay.u(k), m);
      J.block(r, lay.x(k + 1), n, n) = Matrix::Identity(n, n);
      J.block(r, lay.x(k), n, n) = -dd.model.step_jac_x(xk, uk);
      J.block(r, lay.u(k), n, m) = -dd.model.step_jac_u(xk, uk);
      r += n;
      if (lay.full) {
        J(r, lay.s(k + 1)) = 1.0;
        J(r, lay.s(k)) = -decay_c;
        J(r, lay.w(k)) = -gain_c;
        ++r;
        for (int j = 0; j < q; ++j) {
          const auto& hc = std::get<HoelderConstraint>(dd.constraints.items[hrows[j]]);
          const double ct = composed_c_tilde(hc, dd.cert);
          J(r, lay.h(j, k + 1)) = 1.0;
          J(r, lay.h(j, k)) = -std::pow(dd.cert.rho, hc.lambda);
          const double wk = std::max(z[lay.w(k)], 1e-12);
          J(r, lay.w(k)) = -ct * hc.lambda * std::pow(wk, hc.lambda - 1.0);
          ++r;
        }
      }
    }
    return J;
  };

  const auto tjd = tightened;
  nl.ineq = [dp, lay, tb, tjd, hrows, dslope](const Vector& z) {
    const Design& dd = *dp;
    const int N = lay.N;
    const int nw = lay.full ? tb.num_rows() : 0;
    const int p = static_cast<int>(tjd.size());
    const int q = lay.q;
    const bool quad_term = dd.terminal.set.kind == TerminalSet::Kind::QuadLevel;
    const int mterm = quad_term ? 1 : static_cast<int>(dd.terminal.set.rows.rows());
    Vector ci(N * (nw + p + q) + mterm);
    int r = 0;
    for (int k = 0; k < N; ++k) {
      const Vector xk = z.segment(lay.x(k), lay.n);
      const Vector uk = z.segment(lay.u(k), lay.m);
      const double sk = lay.full ? z[lay.s(k)] : 0.0;
      if (lay.full) {
        if (tb.kind == TubeBound::Kind::EllipsoidSup) {
          for (int i = 0; i < nw; ++i) {
            Vector qv = tb.ell_Mx[i] * xk + tb.ell_Mu[i] * uk;
            if (!tb.ell_off.empty()) qv += tb.ell_off[i];
            ci[r++] = std::sqrt(qv.dot(tb.P * qv) + tb.eps_smooth) + tb.d_bar +
                      dslope * sk - z[lay.w(k)];
          }
        } else if (tb.kind == TubeBound::Kind::AffineInC) {
          ci[r++] = tb.eval_smoothed(xk, uk, 0.0) + dslope * sk - z[lay.w(k)];
        } else if (tb.kind == TubeBound::Kind::Constant) {
          ci[r++] = tb.w_bar - z[lay.w(k)];
        } else {
          for (int i = 0; i < nw; ++i)
            ci[r++] = tb.row_ax.row(i).dot(xk) + tb.row_au.row(i).dot(uk) + tb.row_b[i] +
                      dslope * sk - z[lay.w(k)];
        }
      }
      for (int jj = 0; jj < p; ++jj) {
        const double s_used = lay.full ? sk : offline_s(dd, k) * (dd.tube.w_bar > 0
                                  ? tb.w_bar / dd.tube.w_bar : 1.0);
        ci[r++] = eval_constraint(dd.constraints, tjd[jj], xk, uk) + dd.gains[jj] * s_used;
      }
      for (int j = 0; j < q; ++j) {
        const auto& hc = std::get<HoelderConstraint>(dd.constraints.items[hrows[j]]);
        const double hk = lay.full ? z[lay.h(j, k)] : 0.0;
        ci[r++] = hc.g(xk, uk) + hk;
      }
    }
    const Vector xN = z.segment(lay.x(lay.N), lay.n);
    if (quad_term) {
      ci[r++] = xN.dot(dd.terminal.set.S * xN) - dd.terminal.set.level;
    } else {
      const double sN = lay.full ? z[lay.s(lay.N)] : 0.0;
      const bool joint = dd.terminal.set.kind == TerminalSet::Kind::JointRows;
      for (int i = 0; i < dd.terminal.set.rows.rows(); ++i)
        ci[r++] = dd.terminal.set.rows.row(i).dot(xN) + (joint ? sN : 0.0) -
                  dd.terminal.set.level;
    }
    return ci;
  };
  nl.ineq_jac = [dp, lay, tb, tjd, hrows, dslope](const Vector& z) {
    const Design& dd = *dp;
    const int N = lay.N, n = lay.n, m = lay.m, q = lay.q;
    const int nw = lay.full ? tb.num_rows() : 0;
    const int p = static_cast<int>(tjd.size());
    const bool quad_term = dd.terminal.set.kind == TerminalSet::Kind::QuadLevel;
    const int mterm = quad_term ? 1 : static_cast<int>(dd.terminal.set.rows.rows());
    Matrix J = Matrix::Zero(N * (nw + p + q) + mterm, z.size());
    int r = 0;
    for (int k = 0; k < N; ++k) {
      const Vector xk = z.segment(lay.x(k), n);
      const Vector uk = z.segment(lay.u(k), m);
      if (lay.full) {
        if (tb.kind == TubeBound::Kind::EllipsoidSup) {
          for (int i = 0; i < nw; ++i) {
            Vector qv = tb.ell_Mx[i] * xk + tb.ell_Mu[i] * uk;
            if (!tb.ell_off.empty()) qv += tb.ell_off[i];
            const double nrm = std::sqrt(qv.dot(tb.P * qv) + tb.eps_smooth);
            const Vector pq = tb.P * qv / nrm;
            J.row(r).segment(lay.x(k), n) = (tb.ell_Mx[i].transpose() * pq).transpose();
            J.row(r).segment(lay.u(k), m) = (tb.ell_Mu[i].transpose() * pq).transpose();
            J(r, lay.s(k)) = dslope;
            J(r, lay.w(k)) = -1.0;
            ++r;
          }
        } else if (tb.kind == TubeBound::Kind::AffineInC) {
          auto base = [&tb](const Vector& xx, const Vector& uu) {
            return tb.eval_smoothed(xx, uu, 0.0);
          };
          Vector gg = fd_grad_xu(base, xk, uk);
          J.row(r).segment(lay.x(k), n) = gg.head(n).transpose();
          J.row(r).segment(lay.u(k), m) = gg.tail(m).transpose();
          J(r, lay.s(k)) = dslope;
          J(r, lay.w(k)) = -1.0;
          ++r;
        } else if (tb.kind == TubeBound::Kind::Constant) {
          J(r, lay.w(k)) = -1.0;
          ++r;
        } else {
          for (int i = 0; i < nw; ++i) {
            J.row(r).segment(lay.x(k), n) = tb.row_ax.row(i);
            J.row(r).segment(lay.u(k), m) = tb.row_au.row(i);
            J(r, lay.s(k)) = dslope;
            J(r, lay.w(k)) = -1.0;
            ++r;
          }
        }
      }
      for (int jj = 0; jj < p; ++jj) {
        const auto& item = dd.constraints.items[tjd[jj]];
        if (const auto* a = std::get_if<AffineConstraint>(&item)) {
          J.row(r).segment(lay.x(k), n) = a->Lx.transpose();
          J.row(r).segment(lay.u(k), m) = a->Lu.transpose();
        } else {
          const auto& lc = std::get<LipschitzConstraint>(item);
          Vector gg = fd_grad_xu(lc.g, xk, uk);
          J.row(r).segment(lay.x(k), n) = gg.head(n).transpose();
          J.row(r).segment(lay.u(k), m) = gg.tail(m).transpose();
        }
        if (lay.full) J(r, lay.s(k)) = dd.gains[jj];
        ++r;
      }
      for (int j = 0; j < q; ++j) {
        const auto& hc = std::get<HoelderConstraint>(dd.constraints.items[hrows[j]]);
        Vector gg = hc.grad ? hc.grad(xk, uk) : fd_grad_xu(hc.g, xk, uk);
        J.row(r).segment(lay.x(k), n) = gg.head(n).transpose();
        J.row(r).segment(lay.u(k), m) = gg.tail(m).transpose();
        if (lay.full) J(r, lay.h(j, k)) = 1.0;
        ++r;
      }
    }
    const Vector xN = z.segment(lay.x(lay.N), n);
    if (quad_term) {
      J.row(r).segment(lay.x(lay.N), n) = (2.0 * dd.terminal.set.S * xN).transpose();
      ++r;
    } else {
      const bool joint = dd.terminal.set.kind == TerminalSet::Kind::JointRows;
      for (int i = 0; i < dd.terminal.set.rows.rows(); ++i) {
        J.row(r).segment(lay.x(lay.N), n) = dd.terminal.set.rows.row(i);
        if (lay.full && joint) J(r, lay.s(lay.N)) = 1.0;
        ++r;
      }
    }
    return J;
  };

  nl.lb = lb;
  nl.ub = ub;
  nl.x0 = Vector::Zero(ntot);
  return out;
}

namespace {

Vector pack_warm(const OcpSpec& spec, const VarLayout& L) {
  Vector z = Vector::Zero(L.total());
  for (int k = 0; k <= L.N; ++k) {
    Vector xk = (spec.warm_x && spec.warm_x->rows() > k)
                    ? Vector(spec.warm_x->row(k).transpose())
                    : Vector(Vector::Zero(L.n));
    if (k == 0) xk = spec.x0;
    z.segment(L.x(k), L.n) = xk;
    if (L.full) {
      z[L.s(k)] = (spec.warm_s && spec.warm_s->size() > k) ? (*spec.warm_s)[k] : 0.0;
      for (int j = 0; j < L.q; ++j)
        z[L.h(j, k)] = (spec.warm_h && spec.warm_h->cols() > k) ? (*spec.warm_h)(j, k) : 0.0;
    }
    if (k < L.N) {
      if (spec.warm_u && spec.warm_u->rows() > k)
        z.segment(L.u(k), L.m) = spec.warm_u->row(k).transpose();
      if (L.full)
        z[L.w(k)] = (spec.warm_w && spec.warm_w->size() > k) ? (*spec.warm_w)[k] : 0.0;
    }
  }
  if (L.full && spec.warm_s) z[L.s(0)] = 0.0;
  return z;
}

// Rollout-based default guess: terminal-gain feedback, propagated states and tube.
Vector default_guess(const OcpSpec& spec, const VarLayout& L) {
  const Design& d = *spec.design;
  Vector z = Vector::Zero(L.total());
  Vector xk = spec.x0;
  double sk = 0.0;
  const bool use_kf = d.terminal.K_f.size() > 0;
  for (int k = 0; k <= L.N; ++k) {
    z.segment(L.x(k), L.n) = xk;
    if (L.full) z[L.s(k)] = sk;
    if (k < L.N) {
      const Vector uk = use_kf ? Vector(d.terminal.K_f * xk) : Vector(Vector::Zero(L.m));
      z.segment(L.u(k), L.m) = uk;
      if (L.full) {
        const double wk = d.tube.eval(xk, uk, d.ct_tube ? 0.0 : sk) * spec.tube_scale;
        z[L.w(k)] = wk;
        sk = d.tube_decay() * sk + d.tube_gain() * wk;
      }
      xk = d.model.step(xk, uk);
    }
  }
  return z;
}

}  // namespace

OcpSolution solve(const OcpSpec& spec) {
  AssembledOcp a = assemble(spec);
  const VarLayout& L = a.layout;
  const Design& d = *spec.design;

  OcpSolution sol;
  Vector z;
  if (a.is_qp) {
    Vector init = spec.warm_x ? pack_warm(spec, L) : default_guess(spec, L);
    auto [zz, st] = solve_qp(a.qp, 1e-9, &init);
    z = zz;
    sol.status = st;
  } else {
    a.nlp.x0 = spec.warm_x ? pack_warm(spec, L) : default_guess(spec, L);
    SqpOptions opts;
    opts.max_iter = 200;
    opts.tol = 1e-6;
    auto [zz, st] = solve_nlp_sqp(a.nlp, opts);
    z = zz;
    sol.status = st;
  }

  sol.x = Matrix::Zero(L.N + 1, L.n);
  sol.u = Matrix::Zero(L.N, L.m);
  sol.s = Vector::Zero(L.N + 1);
  sol.w = Vector::Zero(L.N);
  sol.h = Matrix::Zero(L.q, L.N + 1);
  for (int k = 0; k <= L.N; ++k) {
    sol.x.row(k) = z.segment(L.x(k), L.n).transpose();
    if (L.full) {
      sol.s[k] = z[L.s(k)];
      for (int j = 0; j < L.q; ++j) sol.h(j, k) = z(L.h(j, k));
    } else {
      sol.s[k] = offline_s(d, k) * spec.tube_scale;
    }
    if (k < L.N) {
      sol.u.row(k) = z.segment(L.u(k), L.m).transpose();
      sol.w[k] = L.full ? z[L.w(k)] : d.tube.w_bar * spec.tube_scale;
    }
  }
  if (!L.full) {
    const auto hrows = d.constraints.hoelder_indices();
    for (int j = 0; j < L.q; ++j) {
      const auto& hc = std::get<HoelderConstraint>(d.constraints.items[hrows[j]]);
      double hk = 0.0;
      for (int k = 0; k <= L.N; ++k) {
        sol.h(j, k) = hk;
        if (k < L.N)
          hk = propagate_h(hk, sol.w[k], d.cert.rho, composed_c_tilde(hc, d.cert), hc.lambda);
      }
    }
  }

  double value = 0.0;
  for (int k = 0; k < L.N; ++k)
    value += d.cost.eval(sol.x.row(k).transpose(), sol.u.row(k).transpose());
  const Vector xN = sol.x.row(L.N).transpose();
  value += xN.dot(d.terminal.P_f * xN);
  sol.value = value;
  return sol;
}

double SolutionResiduals::worst() const {
  return std::max({dynamics, tube, w_rows, tightened, caps, terminal, hoelder});
}

SolutionResiduals evaluate_residuals(const Design& d, const OcpSolution& sol, const Vector& x0,
                                     double tube_scale) {
  SolutionResiduals res;
  const int N = d.N;
  const TubeBound tube = (tube_scale == 1.0) ? d.tube : d.tube.scaled(tube_scale);
  const auto tightened = d.constraints.tightened_indices();
  const auto hoelder = d.constraints.hoelder_indices();
  const double decay = d.tube_decay();
  const double gain = d.tube_gain();

  res.dynamics = (sol.x.row(0).transpose() - x0).norm();
  res.tube = std::abs(sol.s[0]);
  for (int k = 0; k < N; ++k) {
    const Vector xk = sol.x.row(k).transpose();
    const Vector uk = sol.u.row(k).transpose();
    res.dynamics = std::max(res.dynamics,
                            (sol.x.row(k + 1).transpose() - d.model.step(xk, uk)).norm());
    res.tube = std::max(res.tube, std::abs(sol.s[k + 1] - (decay * sol.s[k] + gain * sol.w[k])));
    res.w_rows = std::max(res.w_rows,
                          tube.eval(xk, uk, d.ct_tube ? 0.0 : sol.s[k]) - sol.w[k]);
    for (size_t j = 0; j < tightened.size(); ++j)
      res.tightened = std::max(
          res.tightened, eval_constraint(d.constraints, tightened[j], xk, uk) +
                             d.gains[j] * sol.s[k]);
    if (d.terminal.w_bounded())
      res.caps = std::max(res.caps, sol.w[k] - d.terminal.w_bar * tube_scale);
    if (std::isfinite(d.terminal.s_bar)) res.caps = std::max(res.caps, sol.s[k] - d.terminal.s_bar);
    for (size_t j = 0; j < hoelder.size(); ++j) {
      const auto& hc = std::get<HoelderConstraint>(d.constraints.items[hoelder[j]]);
      const double hnext = propagate_h(std::max(sol.h(j, k), 0.0), std::max(sol.w[k], 0.0),
                                       d.cert.rho, composed_c_tilde(hc, d.cert), hc.lambda);
      res.hoelder = std::max(res.hoelder, std::abs(sol.h(j, k + 1) - hnext));
      res.hoelder = std::max(res.hoelder, hc.g(xk, uk) + sol.h(j, k));
    }
  }
  if (std::isfinite(d.terminal.s_bar))
    res.caps = std::max(res.caps, sol.s[N] - d.terminal.s_bar);
  res.terminal = d.terminal.set.residual(sol.x.row(N).transpose(), sol.s[N]);
  for (size_t j = 0; j < hoelder.size(); ++j)
    if (j < d.terminal.h_bar_f.size())
      res.hoelder = std::max(res.hoelder, sol.h(j, N) - d.terminal.h_bar_f[j]);
  return res;
}

}  // namespace tubempc
