// Python bindings for the fedhyp core: ball geometry, evaluation metrics,
// and the end-to-end simulator driven by the same JSON config as the CLI.
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <string>
#include <vector>

#include "fedhyp/server.hpp"

namespace py = pybind11;
using namespace fedhyp;

namespace {

hyp::ExpMapVariant parse_variant(const std::string& name) {
  if (name == "paper") return hyp::ExpMapVariant::Paper;
  if (name == "std") return hyp::ExpMapVariant::Std;
  throw UsageError("unknown exp-map variant: " + name + " (want paper|std)");
}

Mat mat_from_rows(const std::vector<Vec>& rows) {
  if (rows.empty()) throw UsageError("matrix needs at least one row");
  Mat m(rows.size(), rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != m.cols)
      throw UsageError("ragged rows in matrix argument");
    for (std::size_t j = 0; j < m.cols; ++j) m(i, j) = rows[i][j];
  }
  return m;
}

std::vector<Vec> mat_to_rows(const Mat& m) {
  std::vector<Vec> rows;
  rows.reserve(m.rows);
  for (std::size_t i = 0; i < m.rows; ++i) rows.push_back(m.row(i));
  return rows;
}

py::dict eval_to_dict(const metrics::EvalReport& e) {
  py::dict d;
  d["car_miou"] = e.car_miou;
  d["drone_miou"] = e.drone_miou;
  d["combined"] = e.combined;
  d["per_weather"] = std::vector<double>(e.per_weather.begin(),
                                         e.per_weather.end());
  return d;
}

py::dict run_simulation(const std::string& config_json,
                        std::optional<std::string> out_dir) {
  RunConfig cfg = config_from_json_text(config_json);
  server::RunResult result = [&] {
    if (out_dir) {
      cfg.out_dir = *out_dir;
      metrics::LedgerWriter ledger(cfg.out_dir, config_to_json_text(cfg));
      return server::run(cfg, &ledger);
    }
    return server::run(cfg);
  }();

  py::dict d;
  d["config"] = config_to_json_text(cfg);
  d["source_only"] = eval_to_dict(result.source_only);
  d["final"] = eval_to_dict(result.final_eval);
  d["gamma"] = result.state.gamma.gamma;
  std::vector<double> per_round;
  per_round.reserve(result.records.size());
  for (const auto& rec : result.records) per_round.push_back(rec.eval.combined);
  d["round_combined"] = per_round;
  return d;
}

}  // namespace

PYBIND11_MODULE(_fedhyp, m) {
  m.doc() = "federated source-free adaptation simulator (C++ core)";

  py::register_exception<UsageError>(m, "UsageError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError",
                                         PyExc_ArithmeticError);
  py::register_exception<TrainingError>(m, "TrainingError", PyExc_RuntimeError);

  // --- Poincare-ball geometry ---------------------------------------------
  m.def("mobius_add",
        [](const Vec& x, const Vec& y, double gamma) {
          return hyp::mobius_add(x, y, gamma);
        },
        py::arg("x"), py::arg("y"), py::arg("gamma"));
  m.def("mobius_scalar_mul",
        [](double r, const Vec& x, double gamma) {
          return hyp::mobius_scalar_mul(r, x, gamma);
        },
        py::arg("r"), py::arg("x"), py::arg("gamma"));
  m.def("distance",
        [](const Vec& x, const Vec& y, double gamma) {
          return hyp::distance(x, y, gamma);
        },
        py::arg("x"), py::arg("y"), py::arg("gamma"));
  m.def("exp_map",
        [](const Vec& x, const Vec& v, double gamma, const std::string& variant) {
          return hyp::exp_map(x, v, gamma, parse_variant(variant));
        },
        py::arg("x"), py::arg("v"), py::arg("gamma"),
        py::arg("variant") = "paper");
  m.def("euclid_to_hyp",
        [](const Vec& f, double gamma, const std::string& variant) {
          return hyp::euclid_to_hyp(f, gamma, parse_variant(variant));
        },
        py::arg("f"), py::arg("gamma"), py::arg("variant") = "paper");
  m.def("hyperbolic_midpoint",
        [](const std::vector<Vec>& points, std::optional<Vec> weights,
           double gamma) {
          if (weights)
            return hyp::hyperbolic_midpoint(
                points, std::span<const double>(*weights), gamma);
          return hyp::hyperbolic_midpoint(points, std::nullopt, gamma);
        },
        py::arg("points"), py::arg("weights"), py::arg("gamma"));
  m.def("project_to_ball",
        [](Vec p, double gamma) { return hyp::project_to_ball(std::move(p), gamma); },
        py::arg("p"), py::arg("gamma"));
  m.def("in_ball",
        [](const Vec& p, double gamma) { return hyp::in_ball(p, gamma); },
        py::arg("p"), py::arg("gamma"));

  // --- metrics --------------------------------------------------------------
  m.def("confusion",
        [](const std::vector<int>& preds, const std::vector<int>& labels,
           std::size_t n_classes) {
          return mat_to_rows(metrics::confusion(preds, labels, n_classes));
        },
        py::arg("preds"), py::arg("labels"), py::arg("n_classes"));
  m.def("miou",
        [](const std::vector<Vec>& conf) {
          return metrics::miou(mat_from_rows(conf));
        },
        py::arg("confusion"));
  m.def("combined_score",
        [](const std::vector<Vec>& car_conf, const std::vector<Vec>& drone_conf,
           const std::vector<int>& car_to_drone) {
          return metrics::combined_score(mat_from_rows(car_conf),
                                         mat_from_rows(drone_conf),
                                         car_to_drone);
        },
        py::arg("car_conf"), py::arg("drone_conf"), py::arg("car_to_drone"));

  // --- configuration and full runs -------------------------------------------
  m.def("default_config", [] { return config_to_json_text(RunConfig{}); },
        "resolved default configuration as JSON text");
  m.def("normalize_config",
        [](const std::string& text) {
          return config_to_json_text(config_from_json_text(text));
        },
        py::arg("json_text"),
        "parse, validate, and echo a configuration (typos fail loudly)");
  m.def("apply_ablations",
        [](const std::string& text, const std::string& toggles) {
          RunConfig cfg = config_from_json_text(text);
          apply_ablations(cfg, toggles);
          return config_to_json_text(cfg);
        },
        py::arg("json_text"), py::arg("toggles"));
  m.def("run_simulation", &run_simulation, py::arg("config_json"),
        py::arg("out_dir") = std::nullopt,
        "run pretraining plus all adaptation rounds; returns a summary dict");
}
