// Python bindings: configuration, the two-tank plant, kernel fits, the MPC
// closed loop, certification and the full benchmark.

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "narxmpc/benchmark.hpp"
#include "narxmpc/config.hpp"

namespace py = pybind11;
using namespace narxmpc;

namespace {

RegressorState regressor(const BenchmarkConfig& cfg, const Vec& x) {
  return RegressorState(x, cfg.dims());
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Data-driven NARX MPC toolkit (two-tank benchmark)";
  m.attr("__version__") = toolkit_version();

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<DynamicsError>(m, "DynamicsError", base.ptr());
  py::register_exception<FactorizationError>(m, "FactorizationError", base.ptr());
  py::register_exception<SolverError>(m, "SolverError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());

  py::enum_<SamplingMode>(m, "SamplingMode")
      .value("trajectory", SamplingMode::trajectory)
      .value("state_grid", SamplingMode::state_grid);

  py::enum_<DecreaseVerdict>(m, "DecreaseVerdict")
      .value("at_equilibrium", DecreaseVerdict::at_equilibrium)
      .value("exponential_decrease_verified", DecreaseVerdict::exponential_decrease_verified)
      .value("decrease_violated", DecreaseVerdict::decrease_violated)
      .def_property_readonly("text", [](DecreaseVerdict v) { return to_string(v); });

  py::class_<BenchmarkConfig>(m, "BenchmarkConfig")
      .def(py::init<>())
      .def_readwrite("D_values", &BenchmarkConfig::D_values)
      .def_readwrite("N", &BenchmarkConfig::N)
      .def_readwrite("Q", &BenchmarkConfig::Q)
      .def_readwrite("R", &BenchmarkConfig::R)
      .def_readwrite("nu", &BenchmarkConfig::nu)
      .def_readwrite("steps", &BenchmarkConfig::steps)
      .def_readwrite("seed", &BenchmarkConfig::seed)
      .def_readwrite("u_lo", &BenchmarkConfig::u_lo)
      .def_readwrite("u_hi", &BenchmarkConfig::u_hi)
      .def_readwrite("dt", &BenchmarkConfig::dt)
      .def_readwrite("mode", &BenchmarkConfig::mode)
      .def_readwrite("sigma", &BenchmarkConfig::sigma)
      .def_readwrite("jitter", &BenchmarkConfig::jitter)
      .def_readwrite("h1_ref", &BenchmarkConfig::h1_ref)
      .def_readwrite("h_max", &BenchmarkConfig::h_max)
      .def_readwrite("x0_level", &BenchmarkConfig::x0_level)
      .def_readwrite("growth_states", &BenchmarkConfig::growth_states)
      .def_readwrite("growth_horizon", &BenchmarkConfig::growth_horizon)
      .def_readwrite("validation_samples", &BenchmarkConfig::validation_samples)
      .def("validate", &BenchmarkConfig::validate)
      .def("u_ref", &BenchmarkConfig::u_ref)
      .def("initial_state", [](const BenchmarkConfig& c) { return c.initial_state().values(); })
      .def("to_text", [](const BenchmarkConfig& c) { return config_to_text(c); });

  m.def("load_config", [](const fs::path& p) { return load_config(p); }, py::arg("path"));

  // Two-tank plant in physical units.
  py::class_<TwoTankParams>(m, "TwoTankParams")
      .def(py::init<>())
      .def_readwrite("A1", &TwoTankParams::A1)
      .def_readwrite("c12", &TwoTankParams::c12)
      .def_readwrite("c2", &TwoTankParams::c2)
      .def_readwrite("dt", &TwoTankParams::dt)
      .def("equilibrium_input", &TwoTankParams::equilibrium_input, py::arg("h1"))
      .def("equilibrium_h2", &TwoTankParams::equilibrium_h2, py::arg("h1"));

  m.def(
      "two_tank_rhs",
      [](double h1, double h2, double u, const TwoTankParams& p) {
        const TankRates r = two_tank_rhs({h1, h2}, u, p);
        return py::make_tuple(r.dh1, r.dh2);
      },
      py::arg("h1"), py::arg("h2"), py::arg("u"), py::arg("params") = TwoTankParams{});
  m.def(
      "two_tank_step",
      [](double h1, double h2, double u, const TwoTankParams& p) {
        const PhysicalState s = two_tank_step({h1, h2}, u, p);
        return py::make_tuple(s.h1, s.h2);
      },
      py::arg("h1"), py::arg("h2"), py::arg("u"), py::arg("params") = TwoTankParams{});

  m.def("wendland_phi", &wendland_phi, py::arg("r"));
  m.def("min_horizon", &min_horizon, py::arg("gamma_bar"), py::arg("nu"));

  py::class_<Dataset>(m, "Dataset")
      .def_readonly("sites", &Dataset::sites)
      .def_readonly("targets", &Dataset::targets)
      .def("__len__", [](const Dataset& d) { return d.size(); });

  m.def("generate_dataset",
        [](const BenchmarkConfig& cfg, int D) { return generate_dataset(cfg.mode, cfg, D); },
        py::arg("config"), py::arg("D"));

  py::class_<KernelInterpolant, std::shared_ptr<KernelInterpolant>>(m, "KernelModel")
      .def("predict", &KernelInterpolant::predict, py::arg("site"))
      .def("power", [](const KernelInterpolant& k, const Vec& s) { return k.power_function(s).value; },
           py::arg("site"))
      .def("rkhs_norm", &KernelInterpolant::rkhs_norm)
      .def("max_site_residual", &KernelInterpolant::max_site_residual)
      .def_property_readonly("coefficients", &KernelInterpolant::coefficients)
      .def_property_readonly("data", &KernelInterpolant::data, py::return_value_policy::reference_internal);

  m.def(
      "fit",
      [](const Dataset& data, double sigma, double jitter) {
        return std::make_shared<KernelInterpolant>(
            fit_interpolant(KernelSpec::wendland(data.dims.site_dim(), sigma), data, jitter));
      },
      py::arg("dataset"), py::arg("sigma") = 3.0, py::arg("jitter") = 0.0);

  py::class_<FitReport>(m, "FitReport")
      .def_readonly("D", &FitReport::D)
      .def_readonly("max_site_residual", &FitReport::max_site_residual)
      .def_readonly("rkhs_norm", &FitReport::rkhs_norm)
      .def_property_readonly("c_x", [](const FitReport& r) { return r.errors.c_x; })
      .def_property_readonly("c_u", [](const FitReport& r) { return r.errors.c_u; })
      .def_property_readonly("fill_distance", [](const FitReport& r) { return r.fill.value; })
      .def("as_dict", [](const FitReport& r) {
        py::dict d;
        for (const auto& [k, v] : r.to_key_values()) d[py::str(k)] = v;
        return d;
      });

  m.def("assess_fit", &assess_fit, py::arg("model"), py::arg("config"));

  py::class_<ClosedLoopTrace>(m, "ClosedLoopTrace")
      .def_property_readonly("states",
                             [](const ClosedLoopTrace& t) {
                               std::vector<Vec> out;
                               for (const auto& s : t.states()) out.push_back(s.values());
                               return out;
                             })
      .def_property_readonly("inputs",
                             [](const ClosedLoopTrace& t) {
                               std::vector<Vec> out;
                               for (const auto& s : t.steps) out.push_back(s.u);
                               return out;
                             })
      .def_property_readonly("V",
                             [](const ClosedLoopTrace& t) {
                               std::vector<double> out;
                               for (const auto& s : t.steps) out.push_back(s.V);
                               return out;
                             })
      .def_property_readonly("failure", [](const ClosedLoopTrace& t) -> std::optional<std::string> {
        if (!t.failure) return std::nullopt;
        return "step " + std::to_string(t.failure->step) + ": " + t.failure->message;
      });

  m.def(
      "run_closed_loop",
      [](const BenchmarkConfig& cfg, const KernelInterpolant& model, std::optional<Vec> x0,
         std::optional<int> steps) {
        const auto plant = make_normalized_plant(cfg);
        const RegressorState start = x0 ? regressor(cfg, *x0) : cfg.initial_state();
        py::gil_scoped_release release;
        return run_closed_loop(*plant, model, cfg.mpc_config(), start, steps.value_or(cfg.steps));
      },
      py::arg("config"), py::arg("model"), py::arg("x0") = std::nullopt,
      py::arg("steps") = std::nullopt);

  py::class_<Certificate>(m, "Certificate")
      .def_property_readonly("verdict", [](const Certificate& c) { return c.report.verdict; })
      .def_property_readonly("alpha_bar", [](const Certificate& c) { return c.report.alpha_bar; })
      .def_property_readonly("first_violation",
                             [](const Certificate& c) { return c.report.first_violation; })
      .def_property_readonly("error", [](const Certificate& c) { return c.report.error; })
      .def_property_readonly("P", [](const Certificate& c) { return c.report.P; })
      .def_readonly("gamma_bar", &Certificate::gamma_bar)
      .def_readonly("min_horizon", &Certificate::min_horizon)
      .def_property_readonly("detectability_passed",
                             [](const Certificate& c) { return c.detectability.passed; });

  m.def(
      "certify",
      [](const KernelInterpolant& model, const ClosedLoopTrace& trace, const BenchmarkConfig& cfg) {
        py::gil_scoped_release release;
        return certify(model, trace, cfg);
      },
      py::arg("model"), py::arg("trace"), py::arg("config"));

  py::class_<BenchmarkRun>(m, "BenchmarkRun")
      .def_readonly("D", &BenchmarkRun::D)
      .def_readonly("model", &BenchmarkRun::model)
      .def_readonly("fit", &BenchmarkRun::fit)
      .def_readonly("trace", &BenchmarkRun::trace)
      .def_readonly("certificate", &BenchmarkRun::cert)
      .def_readonly("failure", &BenchmarkRun::failure)
      .def_readonly("seconds", &BenchmarkRun::seconds);

  m.def(
      "run_benchmark",
      [](const BenchmarkConfig& cfg, std::optional<fs::path> out) {
        py::gil_scoped_release release;
        return run_benchmark(cfg, out).runs;
      },
      py::arg("config"), py::arg("out_dir") = std::nullopt);
}
