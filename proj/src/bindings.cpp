#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <nlohmann/json.hpp>

#include "tubempc/config.hpp"

namespace py = pybind11;
using namespace tubempc;

namespace {

// Designs are kept alive behind a handle; the JSON artifact string is the
// exchange format with Python.
struct DesignHandle {
  DesignOutput out;
};

DesignHandle design_from_json_str(const std::string& s) {
  return DesignHandle{design_from_artifact(Json::parse(s))};
}

py::dict solution_to_dict(const OcpSolution& sol) {
  py::dict d;
  d["x"] = sol.x;
  d["u"] = sol.u;
  d["s"] = sol.s;
  d["w"] = sol.w;
  d["h"] = sol.h;
  d["value"] = sol.value;
  d["status"] = std::string(to_string(sol.status.outcome));
  d["iterations"] = sol.status.iterations;
  d["kkt_residual"] = sol.status.kkt_residual;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Tube-based robust MPC toolkit (design pipeline, online problem, simulation)";

  py::register_exception<ConfigError>(m, "ConfigError");
  py::register_exception<DesignError>(m, "DesignError");

  m.def("preset_names", &preset_names, "Bundled benchmark configuration names");
  m.def(
      "preset_config",
      [](const std::string& name) { return preset_config(name).dump(2); },
      py::arg("name"), "Configuration JSON for a bundled preset");
  m.def(
      "design",
      [](const std::string& config_json) {
        return run_design(Json::parse(config_json)).artifact.dump(2);
      },
      py::arg("config_json"), "Run the offline pipeline; returns the artifact JSON");
  m.def(
      "design_scalars",
      [](const std::string& config_json) {
        return run_design(Json::parse(config_json)).scalars;
      },
      py::arg("config_json"), "Named scalar outputs of the offline pipeline");

  py::class_<DesignHandle>(m, "Design")
      .def(py::init(&design_from_json_str), py::arg("artifact_json"))
      .def_property_readonly("N", [](const DesignHandle& d) { return d.out.design.N; })
      .def_property_readonly("n", [](const DesignHandle& d) { return d.out.design.model.n; })
      .def_property_readonly("m", [](const DesignHandle& d) { return d.out.design.model.m; })
      .def_property_readonly("x_ref",
                             [](const DesignHandle& d) { return d.out.design.cost.x_ref; })
      .def_property_readonly("u_ref",
                             [](const DesignHandle& d) { return d.out.design.cost.u_ref; })
      .def_property_readonly("scalars", [](const DesignHandle& d) { return d.out.scalars; })
      .def(
          "solve",
          [](const DesignHandle& d, const Vector& x0_plant) {
            OcpSpec spec;
            spec.design = &d.out.design;
            spec.x0 = x0_plant - d.out.design.cost.x_ref;
            return solution_to_dict(solve(spec));
          },
          py::arg("x0"), "Solve the online problem from a plant-coordinate state")
      .def(
          "simulate",
          [](const DesignHandle& d, int steps, const std::string& policy, uint64_t seed) {
            ScenarioConfig cfg = d.out.scenario;
            if (steps >= 0) cfg.steps = steps;
            if (!policy.empty()) cfg.policy = policy_from_string(policy);
            cfg.seed = seed;
            ClosedLoopTrace tr = run_scenario(d.out.design, d.out.uncertainty, cfg);
            py::dict out;
            const int n = d.out.design.model.n, m = d.out.design.model.m;
            Matrix xs(tr.steps.size(), n), us(tr.steps.size(), m);
            Vector margins(tr.steps.size());
            for (size_t i = 0; i < tr.steps.size(); ++i) {
              xs.row(static_cast<int>(i)) =
                  (tr.steps[i].x + d.out.design.cost.x_ref).transpose();
              us.row(static_cast<int>(i)) =
                  (tr.steps[i].u + d.out.design.cost.u_ref).transpose();
              margins[static_cast<int>(i)] = tr.steps[i].margin;
            }
            out["x"] = xs;
            out["u"] = us;
            out["margins"] = margins;
            out["violations"] = tr.violations;
            out["fallbacks"] = tr.fallbacks;
            return out;
          },
          py::arg("steps") = -1, py::arg("policy") = "", py::arg("seed") = 1);

  // Scalar tube primitives, handy for scripting checks.
  m.def("propagate_tube", &propagate_tube, py::arg("s"), py::arg("w"), py::arg("rho"));
  m.def("tighten", &tighten, py::arg("g_val"), py::arg("c_j"), py::arg("s"));
  m.def("propagate_h", &propagate_h, py::arg("h"), py::arg("w"), py::arg("rho"),
        py::arg("c_tilde"), py::arg("lambda_"));
  m.def("discretize_tube_ct", &discretize_tube_ct, py::arg("s"), py::arg("w0"), py::arg("rho_c"),
        py::arg("L_w"), py::arg("h"));
}
