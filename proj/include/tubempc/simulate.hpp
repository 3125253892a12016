#pragma once

#include <iosfwd>

#include "tubempc/ocp.hpp"

namespace tubempc {

enum class PolicyKind { None, UniformRandom, VertexRandom, AdversarialVdelta };

PolicyKind policy_from_string(const std::string& s);
const char* to_string(PolicyKind k);

struct DisturbancePolicy {
  PolicyKind kind = PolicyKind::None;
  uint64_t seed = 0;
};

/// Realizes a mismatch d_w in W(x,u). The adversarial policy greedily
/// maximizes V_delta(f(x,u) + d_w, x_ref_next) by vertex enumeration
/// (direction heuristic plus random probes for ball-shaped sets).
Vector realize_mismatch(const UncertaintyModel& um, const StabilizabilityCertificate& cert,
                        const NominalModel& model, const Vector& x, const Vector& u,
                        PolicyKind kind, Rng& rng, const Vector& x_ref_next);

struct StepResult {
  Vector x_next;
  Vector d_w;  // effective discrete mismatch x_next - f(x,u0)
};

/// Applies u*_0; continuous-kind models integrate with the tracking feedback
/// re-evaluated on RK4 substeps inside the sampling interval.
StepResult step_closed_loop(const Design& design, const UncertaintyModel& um, const Vector& x_t,
                            const OcpSolution& sol, PolicyKind kind, Rng& rng);

/// The feasible candidate at t+1: tracking feedback along the shifted optimal
/// trajectory, fresh tube/h profiles, terminal-gain extension at the tail.
OcpSolution shift_candidate(const Design& design, const OcpSolution& prev, const Vector& x_next);

struct CandidateReport {
  SolutionResiduals residuals;
  double tube_shrinking = -kInf;         // max_k s_cand[k] - (s*_{k+1} - rho^k w*_0)
  double disturbance_shrinking = -kInf;  // max_k w_cand[k] - w*_{k+1}
  bool feasible(double tol = 1e-8) const { return residuals.worst() <= tol; }
};

CandidateReport check_candidate_feasibility(const Design& design, const OcpSolution& candidate,
                                            const Vector& x_next, const OcpSolution& prev);

struct ScenarioConfig {
  Vector x0;
  int steps = 50;
  PolicyKind policy = PolicyKind::VertexRandom;
  uint64_t seed = 1;
  bool check_candidates = true;
};

struct StepRecord {
  double t = 0.0;
  Vector x;  // deviation coordinates
  Vector u;
  Vector d_w;
  SolveStatus status;
  bool fallback = false;
  double value = 0.0;
  double margin = 0.0;           // min_j (-g_j(x_t, u_t))
  double tube_membership = 0.0;  // V_delta(x_{t+1}, x*_1) - (s*_1)^2
  double candidate_residual = 0.0;
};

struct ClosedLoopTrace {
  std::vector<StepRecord> steps;
  OcpSolution initial_solution;
  int violations = 0;
  int fallbacks = 0;
  double worst_margin = kInf;  // min over steps of margin (negative is good)
  double worst_tube_membership = -kInf;
};

ClosedLoopTrace run_scenario(const Design& design, const UncertaintyModel& um,
                             const ScenarioConfig& cfg);

/// alpha_w(w_bar) = alpha_f(w_bar/sqrt(c_delta_l))
///                + alpha_{c,rho}(w_bar sqrt(1/c_delta_l + kappa_max)).
double practical_bound(const StabilizabilityCertificate& cert, const TerminalIngredients& ti,
                       const StageCost& cost, double w_bar, double set_radius);

/// One CSV row per step: t, x..., u..., margin, V_N, status (12 significant digits).
void write_trace_csv(const ClosedLoopTrace& trace, const Design& design, std::ostream& os);

}  // namespace tubempc
