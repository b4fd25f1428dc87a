#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "prefopt/benchmark.hpp"
#include "prefopt/crash_feedback.hpp"
#include "prefopt/acquisition.hpp"
#include "prefopt/pairwise_gp.hpp"
#include "prefopt/serialization.hpp"
#include "prefopt/session_service.hpp"

namespace py = pybind11;
using namespace prefopt;
using nlohmann::json;

namespace {

// Dicts cross the boundary as JSON text; documents are small and this keeps
// number formatting identical to the HTTP API.
json to_json_value(const py::handle& obj) {
  const std::string text = py::module_::import("json").attr("dumps")(obj).cast<std::string>();
  return json::parse(text);
}

py::object from_json_value(const json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

Preference preference_of(int pi) {
  if (pi != 0 && pi != 1) throw py::value_error("pi must be 0 (first preferred) or 1 (second preferred)");
  return static_cast<Preference>(pi);
}

ComparisonDataset dataset_from(const std::vector<std::tuple<Point, Point, int>>& duels) {
  if (duels.empty()) throw py::value_error("at least one duel is required");
  ComparisonDataset data(static_cast<std::size_t>(std::get<0>(duels.front()).size()));
  for (const auto& [a, b, pi] : duels) data.add(a, b, preference_of(pi));
  return data;
}

class PySession {
 public:
  explicit PySession(std::optional<std::string> data_dir)
      : manager_(data_dir ? std::optional<std::filesystem::path>(*data_dir) : std::nullopt) {}

  py::object create(const py::dict& body) { return from_json_value(manager_.create_session(to_json_value(body))); }
  py::object duel(const std::string& id) { return from_json_value(manager_.get_duel(id)); }
  py::object submit(const std::string& id, const std::string& token, const std::string& outcome) {
    return from_json_value(manager_.submit_feedback(id, {{"duel_token", token}, {"outcome", outcome}}));
  }
  py::object history(const std::string& id) { return from_json_value(manager_.get_history(id)); }
  py::object export_session(const std::string& id) { return from_json_value(manager_.export_session(id)); }
  std::string import_session(const py::dict& doc) { return manager_.import_session(to_json_value(doc)); }
  std::vector<std::string> ids() const { return manager_.session_ids(); }

 private:
  SessionManager manager_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Preferential Bayesian optimization with crash feedback";

  static py::exception<Error> error(m, "Error");
  static py::exception<ServiceError> service_error(m, "ServiceError", error.ptr());
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ServiceError& e) {
      // args: (code, http status, message)
      PyErr_SetObject(service_error.ptr(), py::make_tuple(e.code(), http_status(e), e.what()).ptr());
    } catch (const Error& e) {
      PyErr_SetObject(error.ptr(), py::make_tuple(std::string(to_string(e.kind())), e.what()).ptr());
    }
  });

  m.def(
      "probit_preference_probability",
      [](double f_a, double f_b, double sigma) { return probit_preference_probability(f_a, f_b, NoiseConfig{sigma}); },
      py::arg("f_a"), py::arg("f_b"), py::arg("sigma") = 0.1);
  m.def("expected_max", &expected_max, py::arg("mean_a"), py::arg("mean_b"), py::arg("var_a"), py::arg("var_b"),
        py::arg("cov_ab"));

  py::class_<LaplacePosterior>(m, "Posterior")
      .def_property_readonly("dimension", &LaplacePosterior::dimension)
      .def_property_readonly("map_utilities", &LaplacePosterior::map_utilities)
      .def_property_readonly("log_evidence", &LaplacePosterior::log_evidence)
      .def_property_readonly("newton_iterations", &LaplacePosterior::newton_iterations)
      .def("mean", &LaplacePosterior::mean, py::arg("x"))
      .def(
          "predict",
          [](const LaplacePosterior& post, const Eigen::MatrixXd& queries) {
            std::vector<Point> q;
            for (Eigen::Index i = 0; i < queries.rows(); ++i) q.emplace_back(queries.row(i).transpose());
            const PredictiveDistribution p = post.predict(q);
            return py::make_tuple(p.mean, p.covariance);
          },
          py::arg("queries"), "Mean vector and covariance matrix at the rows of `queries`.")
      .def(
          "eubo", [](const LaplacePosterior& post, const Point& a, const Point& b) { return eubo_value(post, a, b); },
          py::arg("x_a"), py::arg("x_b"));

  m.def(
      "fit",
      [](const std::vector<std::tuple<Point, Point, int>>& duels, double lengthscale, double signal_variance,
         double sigma) {
        return fit_laplace(dataset_from(duels), KernelConfig::shared(lengthscale, signal_variance), NoiseConfig{sigma});
      },
      py::arg("duels"), py::arg("lengthscale") = 0.3, py::arg("signal_variance") = 1.0, py::arg("sigma") = 0.1,
      "Laplace fit of a pairwise GP to (x_first, x_second, pi) duels; pi = 0 means the first point won.");

  m.def(
      "augment",
      [](const std::vector<Point>& feasible, const std::vector<Point>& crashed, const Point& x_a, const Point& x_b,
         bool s_a, bool s_b, std::optional<int> pi) {
        FeedbackLedger ledger;
        for (const auto& x : feasible) ledger.add_feasible(x);
        for (const auto& x : crashed) ledger.add_crashed(x);
        std::optional<Preference> p;
        if (pi) p = preference_of(*pi);
        const Augmentation aug = augment(ledger, DuelFeedback::make(x_a, x_b, s_a, s_b, p));
        py::list added;
        for (const auto& r : aug.added) added.append(py::make_tuple(r.first, r.second, static_cast<int>(r.pi), r.is_virtual));
        return py::make_tuple(added, aug.ledger.feasible(), aug.ledger.crashed());
      },
      py::arg("feasible"), py::arg("crashed"), py::arg("x_a"), py::arg("x_b"), py::arg("s_a"), py::arg("s_b"),
      py::arg("pi") = py::none(),
      "Crash-aware augmentation of one duel. Returns (added duels, feasible set, crashed set).");

  m.def(
      "verify_replay",
      [](const py::dict& state) {
        const ReplayReport r = verify_replay(to_json_value(state));
        py::dict out;
        out["match"] = r.match;
        out["recorded_hash"] = r.recorded_hash;
        out["replayed_hash"] = r.replayed_hash;
        out["iterations"] = r.iterations;
        out["ledger_match"] = r.ledger_match;
        out["detail"] = r.detail;
        return out;
      },
      py::arg("state"), "Re-folds the recorded feedback of an optimizer state document.");

  m.def(
      "run_benchmark",
      [](const py::dict& config, unsigned workers) {
        const BenchmarkConfig c = benchmark_config_from_json(to_json_value(config));
        BenchmarkResult r;
        {
          py::gil_scoped_release release;
          r = run_benchmark(c, workers);
        }
        return from_json_value(to_json(r));
      },
      py::arg("config"), py::arg("workers") = 1);

  py::class_<TestProblem>(m, "TestProblem")
      .def_property_readonly("name", &TestProblem::name)
      .def_property_readonly("dimension", &TestProblem::dimension)
      .def_property("crash_threshold", &TestProblem::crash_threshold, &TestProblem::set_crash_threshold)
      .def("__call__", &TestProblem::operator(), py::arg("x"))
      .def("satisfied", &TestProblem::satisfied, py::arg("x"));
  m.def("make_problem", &make_problem, py::arg("name"), py::arg("dimension") = 0, py::arg("seed") = 0);

  py::class_<PySession>(m, "SessionManager")
      .def(py::init<std::optional<std::string>>(), py::arg("data_dir") = py::none())
      .def("create", &PySession::create, py::arg("body"))
      .def("duel", &PySession::duel, py::arg("session_id"))
      .def("submit", &PySession::submit, py::arg("session_id"), py::arg("duel_token"), py::arg("outcome"))
      .def("history", &PySession::history, py::arg("session_id"))
      .def("export", &PySession::export_session, py::arg("session_id"))
      .def("import_", &PySession::import_session, py::arg("document"))
      .def("session_ids", &PySession::ids);
}
