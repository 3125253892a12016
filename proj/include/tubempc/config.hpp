#pragma once

#include <map>
#include <string>

#include <nlohmann/json.hpp>

#include "tubempc/ocp.hpp"
#include "tubempc/simulate.hpp"

namespace tubempc {

using Json = nlohmann::json;

/// Parsed configuration, before the offline design steps run.
struct LoadedProblem {
  NominalModel model;  // deviation coordinates about (x_ref, u_ref)
  StageCost cost;
  ConstraintSet constraints;
  StabilizabilityCertificate cert;
  std::optional<double> rho_c;  // set when the certificate was continuous-time
  UncertaintyModel uncertainty;
  bool lpv_simplified = false;
  std::optional<std::vector<double>> pinned_gains;
  std::optional<double> w_bar_c;  // recorded continuous-time constant bound

  std::string terminal_design;  // lpv | additive | generic | ct_parametric
  int N = 10;
  double level_scale = 1.0;
  std::optional<double> pinned_L_w, pinned_c_max;
  OcpMode mode = OcpMode::FullTube;

  ScenarioConfig scenario;
};

LoadedProblem load_problem(const Json& config);

struct DesignOutput {
  Design design;
  UncertaintyModel uncertainty;
  ScenarioConfig scenario;
  std::map<std::string, double> scalars;  // named design quantities for reports
  Json artifact;
};

/// Runs the full offline pipeline (gains, tube bound, terminal ingredients)
/// and serializes the result.
DesignOutput run_design(const Json& config);

/// Rebuilds the runnable design from a stored artifact.
DesignOutput design_from_artifact(const Json& artifact);

/// FNV-1a digest of the canonical config dump, hex-encoded.
std::string config_digest(const Json& config);

/// Resolves a preset name or a file path into a config object.
Json resolve_config(const std::string& name_or_path);

// Bundled presets and the built-in model registry.
std::vector<std::string> preset_names();
Json preset_config(const std::string& name);
bool is_preset(const std::string& name);

/// Built-in models: "lti_scalar", "lpv_2d", "quadrotor10".
NominalModel registry_model(const std::string& name, double h, const Vector& x_ref,
                            const Vector& u_ref);

}  // namespace tubempc
