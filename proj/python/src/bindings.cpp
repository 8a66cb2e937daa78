#include <sstream>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "mpcrl/io.hpp"
#include "mpcrl/pipeline.hpp"

namespace py = pybind11;
using namespace mpcrl;

namespace {

// Trained deployment kept alive between calls.
struct Deployment {
  std::shared_ptr<const QTable> mpcrl;
  std::shared_ptr<const QTable> rl;
  std::shared_ptr<const TransitionDb> db;
  int transitions = 0;
  int certification_failures = 0;
};

Deployment train_deployment(const RunConfig& cfg, const std::string& out_dir) {
  const Plant plant = make_plant(cfg);
  TrainingArtifacts a;
  {
    py::gil_scoped_release nogil;
    a = run_training(plant, cfg, cfg.jobs);
  }
  if (!out_dir.empty()) write_training_outputs(out_dir, a, cfg.hash());
  std::vector<Transition> ts = a.transitions;
  attach_sensitivities(plant, cfg, ts);
  Deployment d;
  d.mpcrl = std::make_shared<const QTable>(a.mpcrl.table);
  d.rl = std::make_shared<const QTable>(a.rl.table);
  d.transitions = static_cast<int>(ts.size());
  d.db = std::make_shared<const TransitionDb>(std::move(ts), cfg.state_box.half_width());
  d.certification_failures = a.certification_failures;
  return d;
}

py::dict metrics_dict(const EpisodeMetrics& m) {
  py::dict d;
  const auto& names = EpisodeMetrics::column_names();
  const auto values = m.values();
  for (std::size_t i = 0; i < names.size(); ++i) d[py::str(names[i])] = values[i];
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Certified MPC-guided Q-learning with a Lipschitz safety filter for an aeroelastic wing.";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DomainError>(m, "DomainError", PyExc_ArithmeticError);

  py::class_<RunConfig>(m, "RunConfig")
      .def_static("load", &load_run_config, py::arg("path"))
      .def_static("parse", &parse_run_config, py::arg("text"), py::arg("base_dir") = ".")
      .def("hash", &RunConfig::hash)
      .def("to_json", [](const RunConfig& c) { return c.to_json().dump(); })
      .def_readwrite("seed", &RunConfig::seed)
      .def_readwrite("jobs", &RunConfig::jobs)
      .def_readwrite("out_dir", &RunConfig::out_dir)
      .def_property(
          "runs", [](const RunConfig& c) { return c.eval.runs; },
          [](RunConfig& c, int v) { c.eval.runs = v; })
      .def_property(
          "duration", [](const RunConfig& c) { return c.eval.episode.duration; },
          [](RunConfig& c, double v) { c.eval.episode.duration = v; })
      .def_property(
          "gust_phase", [](const RunConfig& c) { return c.eval.episode.gust_phase; },
          [](RunConfig& c, double v) { c.eval.episode.gust_phase = v; })
      .def_property(
          "samples_per_dim", [](const RunConfig& c) { return c.training.samples_per_dim; },
          [](RunConfig& c, int v) { c.training.samples_per_dim = v; })
      .def_property(
          "envelope", [](const RunConfig& c) { return c.training.envelope; },
          [](RunConfig& c, double v) { c.training.envelope = v; })
      .def_property(
          "realizations", [](const RunConfig& c) { return c.training.realizations; },
          [](RunConfig& c, int v) { c.training.realizations = v; })
      .def_property(
          "grid_bins", [](const RunConfig& c) { return c.training.grid_bins; },
          [](RunConfig& c, int v) { c.training.grid_bins = v; })
      .def("validate", &RunConfig::validate);

  py::class_<Plant>(m, "Plant")
      .def(py::init([](const RunConfig& c) { return make_plant(c); }), py::arg("config"))
      .def_property_readonly("sample_time", &Plant::sample_time)
      .def("alpha_eff", &Plant::alpha_eff, py::arg("x"), py::arg("w") = 0.0)
      .def("deriv", &Plant::deriv, py::arg("x"), py::arg("u"), py::arg("w") = 0.0)
      .def("step_euler", &Plant::step_euler, py::arg("x"), py::arg("u"), py::arg("w") = 0.0)
      .def("step_taylor2", &Plant::step_taylor2, py::arg("x"), py::arg("u"), py::arg("w") = 0.0)
      .def("integrate_rk4", &Plant::integrate_rk4, py::arg("x"), py::arg("u"), py::arg("w"),
           py::arg("duration"), py::arg("substeps"))
      .def("jacobian_x", &Plant::jacobian_x, py::arg("x"), py::arg("u"), py::arg("w") = 0.0)
      .def(
          "linearize",
          [](const Plant& p, const State& x, const RunConfig& c) {
            const LpvModel l = linearize(p, x, c.state_box.scaled(4.0));
            return py::make_tuple(l.A, l.B, l.E, l.c);
          },
          py::arg("x"), py::arg("config"), "Returns (A, B, E, c) of the model scheduled at x.");

  m.def(
      "dryden_gust",
      [](std::uint64_t seed, double duration, const RunConfig& c) {
        return dryden_generate(seed, duration, c.plant.airspeed, c.gust.sigma_w, c.gust.length_scale,
                               c.plant.sample_time, c.gust.w_max)
            .samples;
      },
      py::arg("seed"), py::arg("duration"), py::arg("config"),
      "Clipped Dryden vertical gust samples at the plant rate.");

  m.def(
      "solve_mpc",
      [](const Plant& p, const State& x0, const std::vector<double>& gust, const RunConfig& c) {
        const MpcSolution s = solve_wing_mpc(p, x0, gust, c.mpc);
        py::dict d;
        d["feasible"] = s.feasible;
        d["inputs"] = s.inputs;
        d["cost"] = s.cost;
        d["iterations"] = s.iterations;
        return d;
      },
      py::arg("plant"), py::arg("x0"), py::arg("gust"), py::arg("config"));

  m.def(
      "safe_bounds",
      [](const Plant& p, const State& x0, const std::vector<double>& gust, const RunConfig& c) {
        GustProfile g;
        g.samples = gust;
        const SafeBounds b = safe_bounds(p, x0, g, c.mpc, c.bounds);
        return py::make_tuple(b.verified, b.u_min, b.u_max, b.u_star);
      },
      py::arg("plant"), py::arg("x0"), py::arg("gust"), py::arg("config"),
      "Returns (verified, u_min, u_max, u_star).");

  m.def(
      "validate_model",
      [](const RunConfig& c) {
        const Plant p = make_plant(c);
        const ModelValidation v =
            validate_model(p, c.state_box, c.input_box, c.gust.w_max, c.validation, c.seed);
        return v.to_json(c.validation).dump();
      },
      py::arg("config"), "Taylor and LPV checks as a JSON string.");

  py::class_<Deployment>(m, "Deployment")
      .def_readonly("transitions", &Deployment::transitions)
      .def_readonly("certification_failures", &Deployment::certification_failures)
      .def(
          "policy",
          [](const Deployment& d, const State& x) { return policy_nearest(*d.mpcrl, x); },
          py::arg("x"), "Greedy certified action of the nearest visited cell.");

  m.def("train", &train_deployment, py::arg("config"), py::arg("out_dir") = "",
        "Certified bounds, Q-tables and transitions; writes artifacts when out_dir is given.");

  m.def(
      "evaluate",
      [](const RunConfig& c, const Deployment& d, const std::string& out_dir) {
        const Plant p = make_plant(c);
        CampaignResult r;
        {
          py::gil_scoped_release nogil;
          r = monte_carlo(harness_context(p, c), campaign_controllers(p, c, d.rl, d.db), c.gust,
                          campaign_config(c));
        }
        if (!out_dir.empty()) write_campaign_outputs(out_dir, r, p, c.hash());
        py::dict out;
        for (std::size_t i = 0; i < r.controllers.size(); ++i) out[py::str(r.controllers[i])] = metrics_dict(r.mean(i));
        return out;
      },
      py::arg("config"), py::arg("deployment"), py::arg("out_dir") = "",
      "Paired Monte Carlo campaign; returns the mean metrics per controller.");
}
