#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <map>
#include <string>

#include "ssg/error.hpp"
#include "ssg/metrics.hpp"
#include "ssg/pipeline.hpp"
#include "ssg/rescore.hpp"

namespace py = pybind11;

namespace {

std::string setting_text(const py::handle& v) {
  if (py::isinstance<py::bool_>(v)) return v.cast<bool>() ? "true" : "false";
  if (v.is_none()) return "none";
  if (py::isinstance<py::list>(v) || py::isinstance<py::tuple>(v)) {
    std::string out;
    for (const auto& x : v) out += (out.empty() ? "" : ",") + py::str(x).cast<std::string>();
    return out;
  }
  return py::str(v).cast<std::string>();
}

std::string run(const std::string& command, const py::dict& settings) {
  ssg::RunConfig cfg;
  for (const auto& [k, v] : settings) ssg::apply_setting(cfg, py::str(k).cast<std::string>(), setting_text(v));
  py::gil_scoped_release release;
  if (command == "gen") return ssg::cmd_gen(cfg);
  if (command == "stats") return ssg::cmd_stats(cfg);
  if (command == "train") return ssg::cmd_train(cfg);
  if (command == "eval") return ssg::cmd_eval(cfg);
  if (command == "predict") return ssg::cmd_predict(cfg);
  if (command == "ablate-stats") return ssg::cmd_ablate_stats(cfg);
  throw ssg::ConfigError("unknown command '" + command + "'");
}

}  // namespace

PYBIND11_MODULE(_ssg, m) {
  m.doc() = "Scene-graph estimation engine";

  auto base = py::register_exception<ssg::Error>(m, "SsgError", PyExc_RuntimeError);
  py::register_exception<ssg::ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<ssg::ValidationError>(m, "ValidationError", base.ptr());
  py::register_exception<ssg::FormatError>(m, "FormatError", base.ptr());
  py::register_exception<ssg::IoError>(m, "IoError", base.ptr());
  py::register_exception<ssg::ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<ssg::NumericError>(m, "NumericError", base.ptr());
  py::register_exception<ssg::StateError>(m, "StateError", base.ptr());

  m.def("run", &run, py::arg("command"), py::arg("settings") = py::dict(),
        "Run a command with key/value settings (same keys as the CLI flags). Returns its summary.");
  m.def("config_keys", [] {
    std::map<std::string, std::string> out;
    for (const auto& k : ssg::config_keys()) out[k.name] = k.help;
    return out;
  });
  m.def("softmax", [](const std::vector<double>& z) { return ssg::softmax(z); }, py::arg("logits"));
  m.def("inverse_softmax", [](const std::vector<double>& p) { return ssg::inverse_softmax(p); }, py::arg("p"),
        "Mean-centered log of a positive distribution.");
  m.def(
      "quartiles",
      [](std::vector<double> v) {
        const auto q = ssg::quartiles(std::move(v));
        return py::make_tuple(q.q1, q.median, q.q3);
      },
      py::arg("values"));
}
