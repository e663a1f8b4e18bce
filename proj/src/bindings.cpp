#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include <sagin/centralized.hpp>
#include <sagin/distributed.hpp>
#include <sagin/experiment.hpp>

namespace py = pybind11;
using namespace sagin;

namespace {

py::dict revenue_dict(const ScenarioInstance& s, const ChannelRealization& c,
                      const SolutionState& st) {
  const RevenueReport rr = revenue(s, c, st);
  py::dict d;
  d["u_g"] = rr.u[0];
  d["u_s"] = rr.u[1];
  d["rate_sum"] = rr.rate_sum;
  d["wsr"] = wsr(s, c, st);
  return d;
}

}  // namespace

PYBIND11_MODULE(_sagin, m) {
  m.doc() = "two-operator terrestrial/satellite network optimizer";

  py::class_<ScenarioInstance>(m, "Scenario")
      .def(py::init<>())
      .def_readwrite("seed", &ScenarioInstance::seed)
      .def_property_readonly("n_nodes", &ScenarioInstance::n_nodes)
      .def_property_readonly("n_users", &ScenarioInstance::n_users)
      .def_property(
          "delta_g", [](const ScenarioInstance& s) { return s.sharing.delta_g; },
          [](ScenarioInstance& s, double v) { s.sharing.delta_g = v; })
      .def_property(
          "delta_s", [](const ScenarioInstance& s) { return s.sharing.delta_s; },
          [](ScenarioInstance& s, double v) { s.sharing.delta_s = v; })
      .def_property(
          "sat_power_w", [](const ScenarioInstance& s) { return s.satellite.max_power_w; },
          [](ScenarioInstance& s, double v) { s.satellite.max_power_w = v; })
      .def_property(
          "st_power_w", [](const ScenarioInstance& s) { return s.network.st_power_w; },
          [](ScenarioInstance& s, double v) { s.network.st_power_w = v; })
      .def("node_operator", &ScenarioInstance::node_operator)
      .def("user_operator", &ScenarioInstance::user_operator)
      .def("node_power_w", &ScenarioInstance::node_power_w);

  py::class_<ChannelRealization>(m, "Channels")
      .def_readonly("sigma2_ground", &ChannelRealization::sigma2_ground)
      .def_readonly("sigma2_sat", &ChannelRealization::sigma2_sat);

  py::class_<SolutionState>(m, "SolutionState")
      .def_readwrite("x", &SolutionState::x)
      .def_readwrite("p", &SolutionState::p)
      .def_readwrite("t", &SolutionState::t);

  m.def("generate_scenario",
        [](const ScenarioInstance& cfg, std::uint64_t seed) {
          return generate_scenario(cfg, seed);
        },
        py::arg("config"), py::arg("seed"));
  m.def("load_config", &load_config, py::arg("path"));
  m.def("draw_channels",
        [](const ScenarioInstance& s, std::uint64_t seed) {
          RngStream rng(seed, 1);
          return draw_channels(s, rng);
        },
        py::arg("scenario"), py::arg("seed"),
        "deterministic fading/geometry draw for a generated scenario");

  m.def("user_rate", &user_rate, py::arg("scenario"), py::arg("channels"), py::arg("state"),
        py::arg("node"), py::arg("user"));
  m.def("wsr", &wsr, py::arg("scenario"), py::arg("channels"), py::arg("state"));
  m.def("revenue", &revenue_dict, py::arg("scenario"), py::arg("channels"), py::arg("state"));
  m.def("constraint_residuals",
        [](const ScenarioInstance& s, const ChannelRealization& c, const SolutionState& st,
           std::array<double, 2> u0, bool mbc) {
          return constraint_residuals(s, c, st, u0, mbc);
        },
        py::arg("scenario"), py::arg("channels"), py::arg("state"),
        py::arg("u0") = std::array<double, 2>{0.0, 0.0}, py::arg("mbc") = false);

  m.def("baseline_era",
        [](const ScenarioInstance& s, const ChannelRealization& c) {
          return run_baseline_ca_era(s, c);
        },
        py::arg("scenario"), py::arg("channels"),
        "closest-node association with matched filters and even power/time splits");

  m.def("run_nosharing",
        [](const ScenarioInstance& s, const ChannelRealization& c) {
          const NoSharingResult r = run_nosharing(s, c);
          py::dict d;
          d["u_g0"] = r.u0[0];
          d["u_s0"] = r.u0[1];
          d["state"] = r.state;
          return d;
        },
        py::arg("scenario"), py::arg("channels"));

  m.def("run_centralized",
        [](const ScenarioInstance& s, const ChannelRealization& c, bool mbc_enabled) {
          CentralizedOptions opt;
          opt.mbc_enabled = mbc_enabled;
          const CentralizedResult r = run_wsrm_centralized(s, c, opt);
          py::dict d;
          d["wsr"] = r.wsr;
          d["u_g"] = r.u[0];
          d["u_s"] = r.u[1];
          d["u_g0"] = r.u0[0];
          d["u_s0"] = r.u0[1];
          d["iterations"] = static_cast<int>(r.trace.entries.size());
          d["exit_reason"] = r.trace.exit_reason;
          d["state"] = r.state;
          return d;
        },
        py::arg("scenario"), py::arg("channels"), py::arg("mbc_enabled") = true);

  m.def("run_distributed",
        [](const ScenarioInstance& s, const ChannelRealization& c, bool mbc_enabled) {
          DistributedOptions opt;
          opt.mbc_enabled = mbc_enabled;
          const DistributedResult r = run_wsrm_distributed(s, c, opt);
          py::dict d;
          d["wsr"] = r.wsr;
          d["u_g"] = r.u[0];
          d["u_s"] = r.u[1];
          d["u_g0"] = r.u0[0];
          d["u_s0"] = r.u0[1];
          d["duality_gap"] = r.duality_gap;
          d["consensus_disagreement"] = r.consensus_disagreement;
          d["transcript_bytes"] = static_cast<int>(r.transcript.size());
          d["state"] = r.state;
          return d;
        },
        py::arg("scenario"), py::arg("channels"), py::arg("mbc_enabled") = true);

  m.def("run_experiment",
        [](const std::string& name, int seeds, bool mbc_enabled, const std::string& format) {
          ScenarioInstance base;
          ExperimentSpec spec = named_experiment(name, base);
          if (seeds > 0) {
            spec.seeds.clear();
            for (int i = 1; i <= seeds; ++i) spec.seeds.push_back(i);
          }
          spec.mbc_enabled = mbc_enabled;
          const auto records = run_experiment(spec);
          std::ostringstream os;
          emit_results(records, format, os);
          return os.str();
        },
        py::arg("preset"), py::arg("seeds") = 1, py::arg("mbc_enabled") = true,
        py::arg("format") = "csv",
        "run a named experiment preset and return the emitted records");

  m.def("ground_path_loss_db", &ground_path_loss_db, py::arg("d_km"), py::arg("f_ghz"));
  m.def("sat_path_loss_db", &sat_path_loss_db, py::arg("d_km"), py::arg("f_ghz"));
}
