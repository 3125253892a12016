#include "tubempc/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

namespace tubempc {

PolicyKind policy_from_string(const std::string& s) {
  if (s == "none") return PolicyKind::None;
  if (s == "uniform_random") return PolicyKind::UniformRandom;
  if (s == "vertex_random") return PolicyKind::VertexRandom;
  if (s == "adversarial_vdelta") return PolicyKind::AdversarialVdelta;
  throw ConfigError("unknown disturbance policy '" + s + "'");
}

const char* to_string(PolicyKind k) {
  switch (k) {
    case PolicyKind::None: return "none";
    case PolicyKind::UniformRandom: return "uniform_random";
    case PolicyKind::VertexRandom: return "vertex_random";
    case PolicyKind::AdversarialVdelta: return "adversarial_vdelta";
  }
  return "unknown";
}

namespace {

Vector sample_in_hull(const std::vector<Vector>& vertices, Rng& rng) {
  // Dirichlet(1) weights over the vertex list.
  const int k = static_cast<int>(vertices.size());
  Vector w(k);
  double sum = 0.0;
  for (int i = 0; i < k; ++i) {
    w[i] = -std::log(std::max(rng.uniform(), 1e-300));
    sum += w[i];
  }
  Vector out = Vector::Zero(vertices[0].size());
  for (int i = 0; i < k; ++i) out += (w[i] / sum) * vertices[i];
  return out;
}

}  // namespace

Vector realize_mismatch(const UncertaintyModel& um, const StabilizabilityCertificate& cert,
                        const NominalModel& model, const Vector& x, const Vector& u,
                        PolicyKind kind, Rng& rng, const Vector& x_ref_next) {
  const int n = static_cast<int>(x.size());
  if (kind == PolicyKind::None) return Vector::Zero(n);

  if (const auto* ball = std::get_if<AdditiveBall>(&um)) {
    if (ball->radius == 0.0 || ball->E.size() == 0) return Vector::Zero(n);
    const int nd = static_cast<int>(ball->E.cols());
    switch (kind) {
      case PolicyKind::UniformRandom: {
        Vector d = rng.unit_vector(nd) * ball->radius * std::pow(rng.uniform(), 1.0 / nd);
        return ball->E * d;
      }
      case PolicyKind::VertexRandom: {
        return ball->E * (rng.unit_vector(nd) * ball->radius);
      }
      default: {  // AdversarialVdelta: greedy boundary probe
        const Vector zp = model.step(x, u);
        Vector best = Vector::Zero(n);
        double best_v = -kInf;
        std::vector<Vector> cands;
        Vector q = zp - x_ref_next;
        if (cert.shape == VdeltaShape::Quadratic) q = cert.P * q;
        Vector dird = ball->E.transpose() * q;
        if (dird.norm() > 1e-12) {
          cands.push_back(ball->radius * dird.normalized());
          cands.push_back(-ball->radius * dird.normalized());
        }
        for (int i = 0; i < 6; ++i) cands.push_back(ball->radius * rng.unit_vector(nd));
        for (const auto& d : cands) {
          const double v = cert.vdelta(zp + ball->E * d, x_ref_next);
          if (v > best_v) {
            best_v = v;
            best = ball->E * d;
          }
        }
        return best;
      }
    }
  }

  if (const auto* lpv = std::get_if<LpvUncertainty>(&um)) {
    std::vector<Vector> dverts = lpv->d_vertices;
    const bool has_d = lpv->E.size() > 0 && !dverts.empty();
    switch (kind) {
      case PolicyKind::UniformRandom: {
        Vector th = sample_in_hull(lpv->theta_vertices, rng);
        Vector dw = lpv->A_at(th) * x + lpv->B_at(th) * u + lpv->offset_at(th);
        if (has_d) dw += lpv->E * sample_in_hull(dverts, rng);
        return dw;
      }
      case PolicyKind::VertexRandom: {
        const auto& th = lpv->theta_vertices[static_cast<size_t>(
            rng.uniform_int(static_cast<int>(lpv->theta_vertices.size())))];
        Vector dw = lpv->A_at(th) * x + lpv->B_at(th) * u + lpv->offset_at(th);
        if (has_d)
          dw += lpv->E *
                dverts[static_cast<size_t>(rng.uniform_int(static_cast<int>(dverts.size())))];
        return dw;
      }
      default: {  // AdversarialVdelta: exact vertex enumeration
        const Vector zp = model.step(x, u);
        Vector best = Vector::Zero(n);
        double best_v = -kInf;
        std::vector<Vector> dlist;
        if (has_d)
          for (const auto& d : dverts) dlist.push_back(lpv->E * d);
        else
          dlist.push_back(Vector::Zero(n));
        for (const auto& th : lpv->theta_vertices) {
          const Vector base = lpv->A_at(th) * x + lpv->B_at(th) * u + lpv->offset_at(th);
          for (const auto& ed : dlist) {
            const Vector dw = base + ed;
            const double v = cert.vdelta(zp + dw, x_ref_next);
            if (v > best_v) {
              best_v = v;
              best = dw;
            }
          }
        }
        return best;
      }
    }
  }

  const auto& cb = std::get<CustomBound>(um);
  const double r = cb.w_hat(x, u);
  switch (kind) {
    case PolicyKind::UniformRandom:
      return rng.unit_vector(n) * r * std::pow(rng.uniform(), 1.0 / n);
    case PolicyKind::VertexRandom:
      return rng.unit_vector(n) * r;
    default: {
      const Vector zp = model.step(x, u);
      Vector q = zp - x_ref_next;
      if (cert.shape == VdeltaShape::Quadratic) q = cert.P * q;
      if (q.norm() < 1e-12) return rng.unit_vector(n) * r;
      return r * q.normalized();
    }
  }
}

StepResult step_closed_loop(const Design& design, const UncertaintyModel& um, const Vector& x_t,
                            const OcpSolution& sol, PolicyKind kind, Rng& rng) {
  const Vector u0 = sol.u.row(0).transpose();
  const Vector x_ref_next = sol.x.row(1).transpose();
  StepResult out;

  if (design.model.kind == ModelKind::DiscreteMap) {
    out.d_w = realize_mismatch(um, design.cert, design.model, x_t, u0, kind, rng, x_ref_next);
    out.x_next = design.model.step(x_t, u0) + out.d_w;
    return out;
  }

  // Continuous kind: tracking feedback re-evaluated on RK4 substeps, the
  // disturbance realization held constant over the sampling interval.
  // The uncertainty model of a continuous-kind plant is a drift term on the
  // ODE, held constant over the sampling interval.
  const int substeps = 10;
  const double dt = design.model.h / substeps;
  Vector x = x_t, z = x_t;
  const Vector dist_rate =
      realize_mismatch(um, design.cert, design.model, x_t, u0, kind, rng, x_ref_next);
  for (int i = 0; i < substeps; ++i) {
    const Vector u_fb = design.cert.kappa(x, z, u0);
    auto rhs = [&](const Vector& xx) { return design.model.f(xx, u_fb) + dist_rate; };
    const Vector k1 = rhs(x);
    const Vector k2 = rhs(x + 0.5 * dt * k1);
    const Vector k3 = rhs(x + 0.5 * dt * k2);
    const Vector k4 = rhs(x + dt * k3);
    x += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    z = design.model.rk4_step(z, u0, dt);
  }
  out.x_next = x;
  out.d_w = x - design.model.step(x_t, u0);
  return out;
}

OcpSolution shift_candidate(const Design& design, const OcpSolution& prev, const Vector& x_next) {
  const int N = design.N;
  const int n = design.model.n, m = design.model.m;
  const auto hoelder = design.constraints.hoelder_indices();
  const int q = static_cast<int>(hoelder.size());
  const double decay = design.tube_decay();
  const double gain = design.tube_gain();

  // Terminal extension of the previous solution.
  const Vector xN_prev = prev.x.row(N).transpose();
  const Vector uN_prev = design.terminal.K_f * xN_prev;
  const Vector xN1_prev = design.model.step(xN_prev, uN_prev);

  OcpSolution cand;
  cand.x = Matrix::Zero(N + 1, n);
  cand.u = Matrix::Zero(N, m);
  cand.s = Vector::Zero(N + 1);
  cand.w = Vector::Zero(N);
  cand.h = Matrix::Zero(q, N + 1);

  Vector xk = x_next;
  for (int k = 0; k < N; ++k) {
    cand.x.row(k) = xk.transpose();
    const Vector z_ref = (k + 1 < N + 1) ? prev.x.row(k + 1).transpose() : xN1_prev;
    const Vector v_ref = (k + 1 <= N - 1) ? prev.u.row(k + 1).transpose()
                                          : (k + 1 == N ? uN_prev
                                                        : design.terminal.K_f * xN1_prev);
    const Vector uk = design.cert.kappa(xk, z_ref, v_ref);
    cand.u.row(k) = uk.transpose();
    const double wk = design.tube.eval(xk, uk, design.ct_tube ? 0.0 : cand.s[k]);
    cand.w[k] = wk;
    cand.s[k + 1] = decay * cand.s[k] + gain * wk;
    for (int j = 0; j < q; ++j) {
      const auto& hc = std::get<HoelderConstraint>(design.constraints.items[hoelder[j]]);
      const double factor = std::sqrt(1.0 / design.cert.c_delta_l + design.cert.kappa_max);
      const double ct = hc.c_tilde * std::pow(factor, hc.lambda);
      cand.h(j, k + 1) = propagate_h(cand.h(j, k), wk, design.cert.rho, ct, hc.lambda);
    }
    xk = design.model.step(xk, uk);
  }
  cand.x.row(N) = xk.transpose();

  double value = 0.0;
  for (int k = 0; k < N; ++k)
    value += design.cost.eval(cand.x.row(k).transpose(), cand.u.row(k).transpose());
  value += cand.x.row(N) * design.terminal.P_f * cand.x.row(N).transpose();
  cand.value = value;
  return cand;
}

CandidateReport check_candidate_feasibility(const Design& design, const OcpSolution& candidate,
                                            const Vector& x_next, const OcpSolution& prev) {
  CandidateReport rep;
  rep.residuals = evaluate_residuals(design, candidate, x_next);

  // Shrinking inequalities relative to the previous optimum.
  const int N = design.N;
  const Vector xN_prev = prev.x.row(N).transpose();
  const Vector uN_prev = design.terminal.K_f * xN_prev;
  const double wN_prev =
      design.tube.eval(xN_prev, uN_prev, design.ct_tube ? 0.0 : prev.s[N]);
  const double w0 = prev.w[0];
  for (int k = 0; k < N; ++k) {
    const double s_rhs = prev.s[k + 1] - std::pow(design.tube_decay(), k) * w0;
    rep.tube_shrinking = std::max(rep.tube_shrinking, candidate.s[k] - s_rhs);
    const double w_rhs = (k + 1 <= N - 1) ? prev.w[k + 1] : wN_prev;
    rep.disturbance_shrinking = std::max(rep.disturbance_shrinking, candidate.w[k] - w_rhs);
  }
  return rep;
}

ClosedLoopTrace run_scenario(const Design& design, const UncertaintyModel& um,
                             const ScenarioConfig& cfg) {
  ClosedLoopTrace trace;
  Rng rng(cfg.seed);

  OcpSpec spec;
  spec.design = &design;
  spec.x0 = cfg.x0;
  OcpSolution sol = solve(spec);
  trace.initial_solution = sol;
  if (!sol.status.optimal() && cfg.steps > 0)
    throw DesignError("scenario: problem infeasible at the initial state");

  Vector x_t = cfg.x0;
  std::optional<OcpSolution> candidate;

  for (int t = 0; t < cfg.steps; ++t) {
    bool fallback = false;
    SolveStatus step_status;
    if (t == 0) {
      step_status = sol.status;
    } else {
      OcpSpec st;
      st.design = &design;
      st.x0 = x_t;
      if (candidate) {
        st.warm_x = candidate->x;
        st.warm_u = candidate->u;
        st.warm_s = candidate->s;
        st.warm_w = candidate->w;
        st.warm_h = candidate->h;
      }
      OcpSolution next = solve(st);
      step_status = next.status;
      if (next.status.optimal()) {
        sol = next;
      } else {
        require(candidate.has_value(), "scenario: infeasible with no fallback candidate");
        sol = *candidate;  // the constructed candidate is feasible by design
        fallback = true;
        ++trace.fallbacks;
      }
    }

    StepRecord rec;
    rec.t = t * (design.model.kind == ModelKind::ContinuousRhs ? design.model.h : 1.0);
    rec.x = x_t;
    rec.u = sol.u.row(0).transpose();
    rec.status = step_status;
    rec.fallback = fallback;
    rec.value = sol.value;

    double margin = kInf;
    for (int j = 0; j < design.constraints.size(); ++j)
      margin = std::min(margin, -eval_constraint(design.constraints, j, rec.x, rec.u));
    rec.margin = margin;
    if (margin < -1e-8) ++trace.violations;
    trace.worst_margin = std::min(trace.worst_margin, margin);

    StepResult step = step_closed_loop(design, um, x_t, sol, cfg.policy, rng);
    rec.d_w = step.d_w;
    rec.tube_membership =
        design.cert.vdelta(step.x_next, sol.x.row(1).transpose()) - sol.s[1] * sol.s[1];
    trace.worst_tube_membership = std::max(trace.worst_tube_membership, rec.tube_membership);

    candidate = shift_candidate(design, sol, step.x_next);
    if (cfg.check_candidates) {
      CandidateReport cr = check_candidate_feasibility(design, *candidate, step.x_next, sol);
      rec.candidate_residual = cr.residuals.worst();
    }

    trace.steps.push_back(std::move(rec));
    x_t = step.x_next;
  }
  return trace;
}

double practical_bound(const StabilizabilityCertificate& cert, const TerminalIngredients& ti,
                       const StageCost& cost, double w_bar, double set_radius) {
  if (!std::isfinite(w_bar))
    throw Error("practical_bound: undefined for an unbounded disturbance cap");
  if (w_bar == 0.0) return 0.0;
  const double a = ti.alpha_f(w_bar / std::sqrt(cert.c_delta_l));
  const KPoly alpha_c_rho = cost.alpha_c(set_radius).geometric_sum(cert.rho);
  const double b = alpha_c_rho(w_bar * std::sqrt(1.0 / cert.c_delta_l + cert.kappa_max));
  return a + b;
}

void write_trace_csv(const ClosedLoopTrace& trace, const Design& design, std::ostream& os) {
  const int n = design.model.n, m = design.model.m;
  os << "t";
  for (int i = 0; i < n; ++i) os << ",x" << i;
  for (int i = 0; i < m; ++i) os << ",u" << i;
  os << ",margin,value,status,fallback\n";
  os.precision(12);
  for (const auto& rec : trace.steps) {
    os << rec.t;
    for (int i = 0; i < n; ++i) os << "," << rec.x[i] + design.cost.x_ref[i];
    for (int i = 0; i < m; ++i) os << "," << rec.u[i] + design.cost.u_ref[i];
    os << "," << rec.margin << "," << rec.value << "," << to_string(rec.status.outcome) << ","
       << (rec.fallback ? 1 : 0) << "\n";
  }
}

}  // namespace tubempc
