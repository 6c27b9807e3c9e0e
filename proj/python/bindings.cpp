#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "embal/harness.hpp"
#include "embal/metrics.hpp"
#include "embal/propagation.hpp"
#include "embal/render.hpp"
#include "embal/training.hpp"

namespace py = pybind11;
using namespace embal;

namespace {

template <typename T>
py::array_t<T> grid(const GridWorld& w, const std::vector<T>& cells) {
  py::array_t<T> out({w.height(), w.width()});
  std::copy(cells.begin(), cells.end(), out.mutable_data());
  return out;
}

py::object json_loads(const std::string& text) {
  return py::module_::import("json").attr("loads")(text);
}

std::shared_ptr<const PolicyModel> policy_from(const std::string& path) {
  if (path.empty()) return nullptr;
  return std::make_shared<const PolicyModel>(load_policy_file(path));
}

py::dict row_dict(const ResultRow& r) {
  py::dict d;
  d["method"] = r.method;
  d["world_seed"] = r.world_seed;
  d["start_seed"] = r.start_seed;
  d["miou"] = r.miou;
  d["acc"] = r.acc;
  d["n_ann"] = r.n_ann;
  d["n_coll"] = r.n_coll;
  d["n_steps"] = r.n_steps;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  py::register_exception<Error>(m, "EmbalError", PyExc_ValueError);

  py::enum_<Action>(m, "Action")
      .value("MoveForward", Action::MoveForward)
      .value("MoveLeft", Action::MoveLeft)
      .value("MoveRight", Action::MoveRight)
      .value("RotateLeft", Action::RotateLeft)
      .value("RotateRight", Action::RotateRight)
      .value("Annotate", Action::Annotate)
      .value("Collect", Action::Collect);

  py::class_<Pose>(m, "Pose")
      .def(py::init<double, double, int>(), py::arg("x") = 0.0, py::arg("y") = 0.0,
           py::arg("heading") = 0)
      .def_readwrite("x", &Pose::x)
      .def_readwrite("y", &Pose::y)
      .def_readwrite("heading", &Pose::heading)
      .def_property_readonly("heading_deg", &Pose::heading_deg)
      .def("__eq__", [](const Pose& a, const Pose& b) { return a == b; })
      .def("__repr__", [](const Pose& p) {
        std::ostringstream s;
        s << "Pose(x=" << p.x << ", y=" << p.y << ", heading=" << p.heading << ")";
        return s.str();
      });

  py::class_<GridWorld, std::shared_ptr<GridWorld>>(m, "GridWorld")
      .def_property_readonly("seed", &GridWorld::seed)
      .def_property_readonly("cell_size", &GridWorld::cell_size)
      .def_property_readonly("width", &GridWorld::width)
      .def_property_readonly("height", &GridWorld::height)
      .def_property_readonly("class_count", &GridWorld::class_count)
      .def_property_readonly("free_count", &GridWorld::free_count)
      .def_property_readonly("walls",
                             [](const GridWorld& w) { return grid(w, w.layout().wall); })
      .def_property_readonly("classes",
                             [](const GridWorld& w) { return grid(w, w.layout().surface_class); })
      .def("is_free", [](const GridWorld& w, double x, double y) { return w.is_free(Vec2{x, y}); })
      .def("dumps",
           [](const GridWorld& w) {
             std::ostringstream s;
             w.save(s);
             return s.str();
           })
      .def_static("loads",
                  [](const std::string& text) {
                    std::istringstream s(text);
                    return std::make_shared<GridWorld>(GridWorld::load(s));
                  })
      .def("__eq__", [](const GridWorld& a, const GridWorld& b) { return a == b; });

  m.def(
      "generate_world",
      [](std::uint64_t seed) { return std::make_shared<GridWorld>(generate_world(seed)); },
      py::arg("seed"));
  m.def("sample_start_pose", &sample_start_pose, py::arg("world"), py::arg("seed"));
  m.def(
      "step_pose",
      [](const GridWorld& w, const Pose& p, Action a) {
        const StepResult r = step_pose(w, p, a);
        return py::make_tuple(r.pose, r.collided);
      },
      py::arg("world"), py::arg("pose"), py::arg("action"));
  m.def(
      "geodesic_distance",
      [](const GridWorld& w, std::pair<double, double> a, std::pair<double, double> b) {
        return geodesic_distance(w, Vec2{a.first, a.second}, Vec2{b.first, b.second});
      },
      py::arg("world"), py::arg("a"), py::arg("b"));

  py::class_<View>(m, "View")
      .def_readonly("pose", &View::pose)
      .def_readonly("features", &View::features)
      .def_readonly("gt_class", &View::gt_class)
      .def_readonly("depth", &View::depth)
      .def_property_readonly("width", &View::width);

  m.def(
      "render_view", [](const GridWorld& w, const Pose& p) { return render_view(w, p); },
      py::arg("world"), py::arg("pose"));
  m.def(
      "correspondence", [](const View& a, const View& b) { return correspondence(a, b); },
      py::arg("src"), py::arg("dst"),
      "Source pixel for every destination pixel, -1 where none.");
  m.def(
      "propagate",
      [](const std::vector<int>& labels, const std::vector<int>& corr) {
        return propagate(PropagatedMask(labels), corr).labels();
      },
      py::arg("labels"), py::arg("corr"));
  m.attr("UNKNOWN") = kUnknown;

  m.def(
      "mean_iou",
      [](const std::vector<int>& truth, const std::vector<int>& predicted, int classes) {
        ConfusionMatrix cm(classes);
        cm.add(truth, predicted);
        return cm.mean_iou();
      },
      py::arg("truth"), py::arg("predicted"), py::arg("classes"));

  m.def(
      "run_episode",
      [](std::uint64_t world_seed, std::uint64_t start_seed, const std::string& agent,
         const std::string& perception, const std::string& regime, const std::string& policy) {
        EpisodeConfig cfg;
        cfg.world = std::make_shared<const GridWorld>(generate_world(world_seed));
        cfg.start_seed = start_seed;
        cfg.agent = agent;
        cfg.perception = perception;
        apply_regime(cfg, regime);
        cfg.policy = policy_from(policy);
        py::gil_scoped_release release;
        const std::string text = to_json(run_episode(cfg));
        py::gil_scoped_acquire acquire;
        return json_loads(text);
      },
      py::arg("world_seed"), py::arg("start_seed") = 0, py::arg("agent") = "spacefill",
      py::arg("perception") = "threshold", py::arg("regime") = "steps:256",
      py::arg("policy") = "", "Runs one episode and returns its record as a dict.");

  m.def(
      "benchmark",
      [](const std::vector<std::string>& methods, const std::string& split, int max_worlds,
         int workers, const std::string& policy) {
        std::vector<MethodSpec> specs;
        const auto pol = policy_from(policy);
        for (const auto& text : methods) {
          MethodSpec s = parse_method(text);
          if (s.agent == "rl") s.policy = pol;
          specs.push_back(s);
        }
        BenchmarkOptions opts;
        opts.split = parse_split(split);
        opts.max_worlds = max_worlds;
        opts.workers = workers;
        opts.keep_records = false;
        BenchmarkResult result;
        {
          py::gil_scoped_release release;
          WorldCache worlds;
          result = run_benchmark(specs, opts, worlds);
        }
        py::list rows;
        for (const auto& r : result.rows) rows.append(row_dict(r));
        return rows;
      },
      py::arg("methods"), py::arg("split") = "test", py::arg("max_worlds") = 0,
      py::arg("workers") = 1, py::arg("policy") = "");

  m.def("world_seeds", [](const std::string& split) { return world_seeds(parse_split(split)); },
        py::arg("split"));
}
