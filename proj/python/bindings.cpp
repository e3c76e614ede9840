#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "lamarl/cli/commands.hpp"

#include <sstream>

namespace py = pybind11;
using namespace lamarl;
using nlohmann::json;

namespace {

py::object to_py(const json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

json from_py(const py::handle& o) {
  return json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

env::GridConfig grid_from_py(const py::handle& o) { return env::config_from_json(from_py(o)); }

py::tuple step(lang::GridTaskEnv& e, const std::vector<int>& actions) {
  if (static_cast<int>(actions.size()) != e.n_agents())
    throw std::invalid_argument("step: one action per agent required");
  auto s = e.step(actions);
  return py::make_tuple(s.observations, s.reward, s.done, s.success);
}

py::tuple run_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv{"lamarl"};
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  int code = 0;
  {
    py::gil_scoped_release release;
    code = cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  }
  return py::make_tuple(code, out.str(), err.str());
}

}  // namespace

PYBIND11_MODULE(_lamarl, m) {
  m.doc() = "Language-augmented multi-agent reinforcement learning on grid worlds";
  m.attr("__version__") = cli::code_version();

  py::class_<lang::GridTaskEnv>(m, "GridEnv")
      .def(py::init([](const py::dict& config) { return lang::GridTaskEnv(grid_from_py(config)); }), py::arg("config"))
      .def_property_readonly("n_agents", &lang::GridTaskEnv::n_agents)
      .def_property_readonly("obs_dim", &lang::GridTaskEnv::obs_dim)
      .def_property_readonly("n_actions", &lang::GridTaskEnv::n_actions)
      .def_property_readonly("vocabulary", [](const lang::GridTaskEnv& e) { return e.vocabulary().words(); })
      .def_property_readonly("config", [](const lang::GridTaskEnv& e) { return to_py(env::to_json(e.config())); })
      .def("reset", &lang::GridTaskEnv::reset, py::arg("seed"))
      .def("step", &step, py::arg("actions"), "Returns (observations, reward, done, success).")
      .def("describe", [](const lang::GridTaskEnv& e, int agent) {
        if (agent < 0 || agent >= e.n_agents()) throw py::index_error("agent out of range");
        return lang::detokenize(e.describe(agent), e.vocabulary());
      }, py::arg("agent"))
      .def("snapshot", [](const lang::GridTaskEnv& e) { return to_py(e.snapshot()); })
      .def_property_readonly("done", &lang::GridTaskEnv::done);

  py::class_<agents::Team>(m, "Team")
      .def_static("load", [](const std::string& path) { return agents::load_team(path); }, py::arg("checkpoint"))
      .def_property_readonly("variant", [](const agents::Team& t) { return t.variant().name; })
      .def_property_readonly("n_agents", &agents::Team::n_agents);

  m.def("evaluate_success", [](agents::Team& team, const py::dict& config, int episodes, std::uint64_t seed) {
    const auto r = eval::evaluate_success(team, lang::grid_factory(grid_from_py(config)), episodes, seed);
    return py::dict(py::arg("episodes") = r.episodes, py::arg("success_rate") = r.success_rate,
                    py::arg("mean_length") = r.mean_length,
                    py::arg("mean_tokens_per_message") = r.mean_tokens_per_message);
  }, py::arg("team"), py::arg("config"), py::arg("episodes"), py::arg("seed") = 0);

  m.def("silhouette_score", &eval::silhouette_score, py::arg("points"), py::arg("labels"));
  m.def("action_change", &eval::action_change, py::arg("p_message"), py::arg("p_no_message"));
  m.def("episode_seed", &eval::episode_seed, py::arg("seed"), py::arg("k"));
  m.def("read_embeddings", [](const std::string& path) {
    py::list out;
    for (const auto& r : eval::read_embeddings_jsonl(path))
      out.append(py::dict(py::arg("layer") = std::string(eval::to_string(r.layer)), py::arg("agent") = r.agent,
                          py::arg("label") = r.label, py::arg("vector") = r.vector));
    return out;
  }, py::arg("path"));
  m.def("run_cli", &run_cli, py::arg("args"), "Runs the lamarl tool; returns (exit_code, stdout, stderr).");
}
