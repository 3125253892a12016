#include <doctest.h>

#include <sstream>

#include "tubempc/config.hpp"
#include "tubempc/simulate.hpp"

using namespace tubempc;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<int>(v.size()));
  int i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

}  // namespace

TEST_CASE("closed-loop stepping") {
  DesignOutput d = run_design(preset_config("lti_scalar_lpv"));
  OcpSpec spec;
  spec.design = &d.design;
  spec.x0 = vec({0.6});
  OcpSolution sol = solve(spec);
  REQUIRE(sol.status.optimal());

  SUBCASE("no-disturbance policy reproduces the nominal step") {
    Rng rng(1);
    StepResult r = step_closed_loop(d.design, d.uncertainty, spec.x0, sol, PolicyKind::None, rng);
    CHECK((r.x_next - d.design.model.step(spec.x0, sol.u.row(0).transpose())).norm() <= 1e-14);
    CHECK(r.d_w.norm() <= 1e-14);
  }
  SUBCASE("seeded vertex policy is reproducible") {
    Rng rng1(7), rng2(7);
    StepResult a =
        step_closed_loop(d.design, d.uncertainty, spec.x0, sol, PolicyKind::VertexRandom, rng1);
    StepResult b =
        step_closed_loop(d.design, d.uncertainty, spec.x0, sol, PolicyKind::VertexRandom, rng2);
    CHECK(a.x_next[0] == b.x_next[0]);
    CHECK(a.d_w[0] == b.d_w[0]);
  }
  SUBCASE("adversarial policy picks the sign of the deviation") {
    // With x*_1 known, theta = +-1 enumeration must pick the vertex that
    // maximizes V_delta(z+ + d_w, x*_1); by hand this is sign-aligned with
    // z+ - x*_1 plus the worst additive vertex.
    Rng rng(3);
    StepResult r = step_closed_loop(d.design, d.uncertainty, spec.x0, sol,
                                    PolicyKind::AdversarialVdelta, rng);
    const Vector u0 = sol.u.row(0).transpose();
    const Vector zp = d.design.model.step(spec.x0, u0);
    double best = -1.0;
    Vector best_dw(1);
    for (double th : {1.0, -1.0})
      for (double dd : {0.05, -0.05}) {
        Vector dw = vec({0.1 * th * spec.x0[0] + dd});
        const double v = d.design.cert.vdelta(zp + dw, sol.x.row(1).transpose());
        if (v > best) {
          best = v;
          best_dw = dw;
        }
      }
    CHECK(r.d_w[0] == doctest::Approx(best_dw[0]).epsilon(1e-12));
  }
}

TEST_CASE("candidate shift") {
  DesignOutput d = run_design(preset_config("lti_scalar_lpv"));
  OcpSpec spec;
  spec.design = &d.design;
  spec.x0 = vec({0.6});
  OcpSolution sol = solve(spec);
  REQUIRE(sol.status.optimal());

  SUBCASE("zero disturbance gives the exact shift") {
    Vector x_next = d.design.model.step(spec.x0, sol.u.row(0).transpose());
    OcpSolution cand = shift_candidate(d.design, sol, x_next);
    for (int k = 0; k + 1 <= d.design.N; ++k)
      CHECK((cand.x.row(k) - sol.x.row(k + 1)).cwiseAbs().maxCoeff() <= 1e-12);
    for (int k = 0; k + 1 <= d.design.N - 1; ++k)
      CHECK((cand.u.row(k) - sol.u.row(k + 1)).cwiseAbs().maxCoeff() <= 1e-12);
  }
  SUBCASE("disturbed shift satisfies the two shrinking inequalities") {
    Rng rng(5);
    Vector x_t = spec.x0;
    OcpSolution cur = sol;
    for (int t = 0; t < 20; ++t) {
      StepResult r =
          step_closed_loop(d.design, d.uncertainty, x_t, cur, PolicyKind::VertexRandom, rng);
      OcpSolution cand = shift_candidate(d.design, cur, r.x_next);
      CandidateReport rep = check_candidate_feasibility(d.design, cand, r.x_next, cur);
      CHECK(rep.tube_shrinking <= 1e-9);
      CHECK(rep.disturbance_shrinking <= 1e-9);
      CHECK(rep.residuals.worst() <= 1e-8);
      x_t = r.x_next;
      OcpSpec next;
      next.design = &d.design;
      next.x0 = x_t;
      next.warm_x = cand.x;
      next.warm_u = cand.u;
      next.warm_s = cand.s;
      next.warm_w = cand.w;
      next.warm_h = cand.h;
      cur = solve(next);
      REQUIRE(cur.status.optimal());
    }
  }
  SUBCASE("an undersized tube slope in the construction is caught by the check") {
    // Build the candidate with a halved L_w: its w profile underestimates the
    // uncertainty, which the check against the true design must flag.
    Design corrupted = d.design;
    corrupted.tube.L_w *= 0.5;
    Rng rng(9);
    StepResult r =
        step_closed_loop(d.design, d.uncertainty, spec.x0, sol, PolicyKind::VertexRandom, rng);
    OcpSolution cand = shift_candidate(corrupted, sol, r.x_next);
    CandidateReport rep = check_candidate_feasibility(d.design, cand, r.x_next, sol);
    CHECK(rep.residuals.w_rows > 1e-8);  // w_k < w_tilde_true(x_k, u_k, s_k)
  }
  SUBCASE("a hand-corrupted trajectory is caught by the check") {
    Vector x_next = d.design.model.step(spec.x0, sol.u.row(0).transpose());
    OcpSolution cand = shift_candidate(d.design, sol, x_next);
    cand.u(0, 0) = 1.4;  // outside |u| <= 1
    CandidateReport rep = check_candidate_feasibility(d.design, cand, x_next, sol);
    CHECK(rep.residuals.worst() > 0.1);
  }
}

TEST_CASE("scenario runs") {
  SUBCASE("zero steps leave only the initial solve") {
    DesignOutput d = run_design(preset_config("lti_scalar_lpv"));
    ScenarioConfig cfg = d.scenario;
    cfg.steps = 0;
    ClosedLoopTrace tr = run_scenario(d.design, d.uncertainty, cfg);
    CHECK(tr.steps.empty());
    CHECK(tr.initial_solution.status.optimal());
  }
  SUBCASE("scalar lpv, 50 disturbed steps, value settles near the offset") {
    DesignOutput d = run_design(preset_config("lti_scalar_lpv"));
    ScenarioConfig cfg = d.scenario;
    cfg.steps = 50;
    ClosedLoopTrace tr = run_scenario(d.design, d.uncertainty, cfg);
    CHECK(tr.violations == 0);
    CHECK(tr.fallbacks == 0);
    CHECK(tr.worst_tube_membership <= 1e-8);
    // Non-increasing up to the practical-stability offset alpha_w(w_bar_eff).
    const double D = set_radius(d.design.constraints, 1, 1);
    const double w_eff = d.design.tube.eval(vec({1.0}), vec({0.0}), d.design.cert.s_bar());
    const double offset = practical_bound(d.design.cert, d.design.terminal, d.design.cost,
                                          w_eff, D);
    for (size_t t = 1; t < tr.steps.size(); ++t)
      CHECK(tr.steps[t].value <= tr.steps[t - 1].value + offset + 1e-9);
  }
  SUBCASE("identical configs and seeds give bit-identical traces") {
    DesignOutput d = run_design(preset_config("lpv_2d"));
    ScenarioConfig cfg = d.scenario;
    cfg.steps = 15;
    cfg.seed = 123;
    ClosedLoopTrace a = run_scenario(d.design, d.uncertainty, cfg);
    ClosedLoopTrace b = run_scenario(d.design, d.uncertainty, cfg);
    REQUIRE(a.steps.size() == b.steps.size());
    for (size_t t = 0; t < a.steps.size(); ++t) {
      CHECK(a.steps[t].x == b.steps[t].x);
      CHECK(a.steps[t].u == b.steps[t].u);
      CHECK(a.steps[t].d_w == b.steps[t].d_w);
    }
    std::ostringstream csv_a, csv_b;
    write_trace_csv(a, d.design, csv_a);
    write_trace_csv(b, d.design, csv_b);
    CHECK(csv_a.str() == csv_b.str());
  }
}

TEST_CASE("quadrotor additive scenario keeps the position constraint") {
  DesignOutput d = run_design(preset_config("quadrotor10_additive"));
  ScenarioConfig cfg = d.scenario;
  cfg.steps = 30;
  cfg.policy = PolicyKind::VertexRandom;
  cfg.seed = 4;
  ClosedLoopTrace tr = run_scenario(d.design, d.uncertainty, cfg);
  CHECK(static_cast<int>(tr.steps.size()) == 30);
  for (const auto& rec : tr.steps) {
    const double x1 = rec.x[0] + d.design.cost.x_ref[0];
    CHECK(x1 <= 4.0 + 1e-8);
  }
  CHECK(tr.violations == 0);
}

TEST_CASE("practical stability bound") {
  DesignOutput d = run_design(preset_config("lti_scalar_lpv"));
  const double D = set_radius(d.design.constraints, 1, 1);

  SUBCASE("zero cap gives zero") {
    CHECK(practical_bound(d.design.cert, d.design.terminal, d.design.cost, 0.0, D) ==
          doctest::Approx(0.0));
  }
  SUBCASE("closed form from the two quadratic moduli") {
    const double w = 0.048;
    const double a = d.design.terminal.alpha_f(w / std::sqrt(d.design.cert.c_delta_l));
    KPoly acr = d.design.cost.alpha_c(D).geometric_sum(d.design.cert.rho);
    const double b =
        acr(w * std::sqrt(1.0 / d.design.cert.c_delta_l + d.design.cert.kappa_max));
    CHECK(practical_bound(d.design.cert, d.design.terminal, d.design.cost, w, D) ==
          doctest::Approx(a + b).epsilon(1e-12));
  }
  SUBCASE("unbounded cap rejected") {
    CHECK_THROWS(practical_bound(d.design.cert, d.design.terminal, d.design.cost, kInf, D));
  }
  SUBCASE("undisturbed runs decrease strictly until the terminal neighbourhood") {
    ScenarioConfig cfg = d.scenario;
    cfg.steps = 20;
    cfg.policy = PolicyKind::None;
    ClosedLoopTrace tr = run_scenario(d.design, d.uncertainty, cfg);
    for (size_t t = 1; t < tr.steps.size(); ++t) {
      if (tr.steps[t - 1].value > 0.05)
        CHECK(tr.steps[t].value < tr.steps[t - 1].value);
    }
  }
}

TEST_CASE("practical stability: tail of disturbed runs stays inside the derived ball") {
  DesignOutput d = run_design(preset_config("lti_scalar_lpv"));
  const double D = set_radius(d.design.constraints, 1, 1);
  // Effective disturbance magnitude along the run: the bound evaluated at the
  // worst visited state; the benchmark stays within |x| <= 1, s <= s_bar.
  const double w_eff = d.design.tube.eval(vec({1.0}), vec({0.0}), d.design.cert.s_bar());
  const double alpha_w = practical_bound(d.design.cert, d.design.terminal, d.design.cost,
                                         w_eff, D);
  const double radius = d.design.cost.alpha_l_inverse(alpha_w) * 1.1;  // sampling slack
  for (uint64_t seed : {1ull, 2ull, 3ull, 4ull, 5ull}) {
    ScenarioConfig cfg = d.scenario;
    cfg.steps = 50;
    cfg.seed = seed;
    cfg.policy = PolicyKind::VertexRandom;
    ClosedLoopTrace tr = run_scenario(d.design, d.uncertainty, cfg);
    const size_t tail = tr.steps.size() - tr.steps.size() / 5;
    for (size_t t = tail; t < tr.steps.size(); ++t)
      CHECK(tr.steps[t].x.norm() <= radius);
  }
}
