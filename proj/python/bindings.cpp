#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "sc2ba/adversary.hpp"
#include "sc2ba/error.hpp"
#include "sc2ba/metrics.hpp"
#include "sc2ba/run_config.hpp"

namespace py = pybind11;
using namespace sc2ba;

namespace {

PyObject* g_error = nullptr;

Team team_from(const std::string& s) {
  if (s == "red") return Team::Red;
  if (s == "blue") return Team::Blue;
  throw Error(ErrorCode::ConfigSyntax, "team must be 'red' or 'blue', got '" + s + "'");
}

py::array_t<double> matrix(const std::vector<std::vector<double>>& rows, std::size_t width) {
  py::array_t<double> out({rows.size(), width});
  auto m = out.mutable_unchecked<2>();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < width; ++j) m(i, j) = rows[i][j];
  }
  return out;
}

py::array_t<bool> mask_matrix(const std::vector<ActionMask>& masks) {
  const std::size_t width = masks.empty() ? 0 : masks.front().size();
  py::array_t<bool> out({masks.size(), width});
  auto m = out.mutable_unchecked<2>();
  for (std::size_t i = 0; i < masks.size(); ++i) {
    for (std::size_t j = 0; j < width; ++j) m(i, j) = masks[i][j] != 0;
  }
  return out;
}

py::dict eval_dict(const EvalResult& r) {
  py::dict d;
  d["red_wins"] = r.wins;
  d["draws"] = r.draws;
  d["blue_wins"] = r.losses;
  d["mean_return_red"] = r.mean_return_red;
  d["mean_return_blue"] = r.mean_return_blue;
  d["mean_length"] = r.mean_length;
  return d;
}

py::list points_list(const RunMetrics& m) {
  py::list out;
  for (const EvalPoint& p : m.points) {
    py::dict d;
    d["env_step"] = p.env_step;
    d["wins"] = p.wins;
    d["draws"] = p.draws;
    d["losses"] = p.losses;
    d["win_rate"] = p.win_rate();
    out.append(d);
  }
  return out;
}

// Action RNG owned by the Python-side learner handle.
struct PyLearner {
  std::shared_ptr<Learner> learner;
  Rng rng;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Dual-team micro-combat environment and self-play benchmark";

  g_error = PyErr_NewException("sc2ba.Error", PyExc_RuntimeError, nullptr);
  m.attr("Error") = py::handle(g_error);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object inst = py::reinterpret_steal<py::object>(
          PyObject_CallFunction(g_error, "s", e.what()));
      inst.attr("code") = std::string(error_code_name(e.code()));
      PyErr_SetObject(g_error, inst.ptr());
    }
  });

  py::class_<ScenarioSpec>(m, "Scenario")
      .def_readonly("name", &ScenarioSpec::name)
      .def_readonly("episode_step_limit", &ScenarioSpec::episode_step_limit)
      .def_property_readonly("symmetric", &ScenarioSpec::symmetric)
      .def("unit_count", [](const ScenarioSpec& s, const std::string& t) {
        return s.unit_count(team_from(t));
      })
      .def("config_text", &serialize_scenario_config)
      .def("__repr__", [](const ScenarioSpec& s) { return "<Scenario " + s.name + ">"; });

  m.def("builtin_scenarios", [] {
    std::vector<std::string> names;
    for (const auto& s : builtin_scenarios()) names.push_back(s.name);
    return names;
  });
  m.def("scenario", [](const std::string& name) { return builtin_scenario(name); },
        py::arg("name"));
  m.def("parse_scenario", [](const std::string& text) { return parse_scenario_config(text); },
        py::arg("text"));

  py::class_<TeamStepResult>(m, "TeamStep")
      .def_property_readonly("obs",
                             [](const TeamStepResult& r) {
                               const std::size_t w =
                                   r.observations.empty() ? 0 : r.observations.front().size();
                               return matrix(r.observations, w);
                             })
      .def_property_readonly("state",
                             [](const TeamStepResult& r) {
                               return py::array_t<double>(r.state.size(), r.state.data());
                             })
      .def_property_readonly("masks", [](const TeamStepResult& r) { return mask_matrix(r.masks); })
      .def_readonly("reward", &TeamStepResult::reward)
      .def_readonly("terminated", &TeamStepResult::terminated)
      .def_property_readonly("outcome",
                             [](const TeamStepResult& r) { return std::string(to_string(r.outcome)); });

  py::class_<Env>(m, "Env")
      .def(py::init([](const ScenarioSpec& spec) { return Env(spec); }), py::arg("scenario"))
      .def(
          "reset",
          [](Env& env, std::uint64_t seed) {
            const EnvStep s = env.reset(seed);
            return py::make_tuple(s.red, s.blue);
          },
          py::arg("seed"))
      .def(
          "step",
          [](Env& env, const std::vector<int>& red, const std::vector<int>& blue) {
            const EnvStep s = env.step(red, blue);
            return py::make_tuple(s.red, s.blue);
          },
          py::arg("red_actions"), py::arg("blue_actions"))
      .def("n_agents", [](const Env& e, const std::string& t) { return e.n_agents(team_from(t)); })
      .def("n_actions", [](const Env& e, const std::string& t) { return e.n_actions(team_from(t)); })
      .def("obs_size", [](const Env& e, const std::string& t) { return e.obs_size(team_from(t)); })
      .def("state_size",
           [](const Env& e, const std::string& t) { return e.state_size(team_from(t)); })
      .def_property_readonly("terminated", &Env::terminated)
      .def_property_readonly("outcome", [](const Env& e) { return std::string(to_string(e.outcome())); });

  py::class_<PyLearner>(m, "Learner")
      .def_property_readonly("algorithm", [](const PyLearner& l) { return l.learner->algorithm(); })
      .def_property_readonly("frozen", [](const PyLearner& l) { return l.learner->frozen(); })
      .def("freeze", [](PyLearner& l) { l.learner->freeze(); })
      .def("checkpoint_hash", [](const PyLearner& l) { return l.learner->checkpoint_hash(); })
      .def("save", [](const PyLearner& l, const std::string& path) {
        save_learner_file(*l.learner, path);
      })
      .def("seed", [](PyLearner& l, std::uint64_t seed) { l.rng.seed(seed); })
      .def(
          "act",
          [](PyLearner& l, const TeamStepResult& view, double epsilon) {
            return l.learner->act(view, {}, epsilon, l.rng);
          },
          py::arg("view"), py::arg("epsilon") = 0.0);

  m.def(
      "make_learner",
      [](const std::string& algo, const ScenarioSpec& spec, const std::string& team,
         const std::string& config, std::uint64_t seed) {
        RunConfig rc;
        if (!config.empty()) apply_config_text(rc, config);
        QLearnerConfig lc = rc.train.learner;
        lc.seed = stream_seed(seed, Stream::Init);
        return PyLearner{std::shared_ptr<Learner>(make_learner(algo, spec, team_from(team), lc)),
                         Rng(seed)};
      },
      py::arg("algorithm"), py::arg("scenario"), py::arg("team") = "red", py::arg("config") = "",
      py::arg("seed") = 0);
  m.def(
      "load_learner",
      [](const std::string& path, const ScenarioSpec& spec, const std::string& team) {
        return PyLearner{std::shared_ptr<Learner>(load_learner_file(path, spec, team_from(team))),
                         Rng(0)};
      },
      py::arg("path"), py::arg("scenario"), py::arg("team") = "red");

  m.def(
      "evaluate",
      [](const ScenarioSpec& spec, const PyLearner& red, const PyLearner& blue, int episodes,
         std::uint64_t seed) {
        return eval_dict(evaluate(spec, *red.learner, *blue.learner, episodes, seed));
      },
      py::arg("scenario"), py::arg("red"), py::arg("blue"), py::arg("episodes") = 32,
      py::arg("seed") = 0);

  m.def(
      "train_vs_bot",
      [](PyLearner& learner, const ScenarioSpec& spec, const std::string& config,
         std::uint64_t seed) {
        RunConfig rc;
        if (!config.empty()) apply_config_text(rc, config);
        RunMetrics metrics;
        {
          py::gil_scoped_release release;
          metrics = train_vs_bot(*learner.learner, spec, rc.train, seed);
        }
        return points_list(metrics);
      },
      py::arg("learner"), py::arg("scenario"), py::arg("config") = "", py::arg("seed") = 0,
      "Train against the scripted bot; `config` uses the [train] [learner] [reward] sections.");

  m.def(
      "measure_throughput",
      [](const ScenarioSpec& spec, std::int64_t steps, std::uint64_t seed) {
        const Throughput t = measure_throughput(spec, steps, seed);
        py::dict d;
        d["env_steps"] = t.env_steps;
        d["episodes"] = t.episodes;
        d["seconds"] = t.seconds;
        d["steps_per_second"] = t.steps_per_second();
        return d;
      },
      py::arg("scenario"), py::arg("steps") = 100000, py::arg("seed") = 0);

  m.def(
      "pca_2d",
      [](py::array_t<double, py::array::c_style | py::array::forcecast> rows) {
        if (rows.ndim() != 2) throw Error(ErrorCode::ShapeMismatch, "expected a 2-D array");
        nn::Matrix x(rows.shape(0), rows.shape(1));
        auto r = rows.unchecked<2>();
        for (py::ssize_t i = 0; i < rows.shape(0); ++i) {
          for (py::ssize_t j = 0; j < rows.shape(1); ++j) x(i, j) = r(i, j);
        }
        const Pca2d p = pca_2d(x);
        py::dict d;
        d["coords"] = p.coords;
        d["explained_ratio"] = p.explained_ratio;
        return d;
      },
      py::arg("rows"));

  m.def(
      "action_diversity",
      [](const std::vector<std::vector<int>>& rows, int n_agents, int n_actions, double bandwidth) {
        JointActionLog log{n_agents, n_actions, rows};
        const DiversityReport r = action_diversity(log, bandwidth);
        py::dict d;
        d["cluster_count"] = r.cluster_count;
        d["labels"] = r.labels;
        d["coords"] = r.coords;
        d["explained_ratio"] = r.explained_ratio;
        d["bandwidth"] = r.bandwidth;
        return d;
      },
      py::arg("rows"), py::arg("n_agents"), py::arg("n_actions"), py::arg("bandwidth") = 0.0);
}
