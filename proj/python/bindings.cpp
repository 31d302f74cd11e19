#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "mtlwm/errors.hpp"
#include "mtlwm/experiment.hpp"
#include "mtlwm/report.hpp"

namespace py = pybind11;
using nlohmann::json;
using namespace mtlwm;

namespace {

// Structured values cross the boundary as JSON text; the Python package
// decodes them.
std::string dump(const json& doc) { return doc.dump(); }

ExperimentConfig config_of(const std::string& text) {
  json doc = json::parse(text, nullptr, false);
  if (doc.is_discarded()) throw ConfigError("config is not valid JSON");
  return config_from_json(doc);
}

WatermarkKey key_of(const std::string& text) {
  json doc = json::parse(text, nullptr, false);
  if (doc.is_discarded()) throw ConfigError("key is not valid JSON");
  return key_from_json(doc);
}

py::array_t<double> to_numpy(const Eigen::MatrixXd& m) {
  // Rows are points.
  py::array_t<double> out({m.cols(), m.rows()});
  auto v = out.mutable_unchecked<2>();
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) v(j, i) = m(i, j);
  }
  return out;
}

py::dict train_result(const TrainedModel& t, const WatermarkKey& key) {
  py::dict d;
  d["model"] = serialize_model(t.model.published());
  d["model_full"] = serialize_model(t.model);
  d["cwm"] = serialize_head(t.model.watermark_head());
  d["key"] = dump(key_to_json(key));
  d["primary_report"] = dump(to_json(t.primary_report));
  d["embed_report"] = dump(to_json(t.embed_report));
  d["clean_test_accuracy"] = t.clean_test_accuracy;
  d["test_accuracy"] = t.test_accuracy;
  d["wm_accuracy"] = t.wm_accuracy;
  d["model_hash"] = to_hex(model_hash(t.model.published()));
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Multi-task watermarking core";

  // Translators run newest first, so the base class goes first.
  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<TrainingError>(m, "TrainingError", PyExc_RuntimeError);

  m.def("default_domain_bits", &default_domain_bits, py::arg("n"));
  m.def(
      "min_domain_bits",
      [](std::uint32_t n, double tau) {
        const auto b = min_domain_bits(n, tau);
        return py::make_tuple(b.minimum, b.default_bits, b.default_sufficient);
      },
      py::arg("n"), py::arg("tau"));
  m.def("collision_bound", &collision_bound, py::arg("n"), py::arg("m"), py::arg("q"));
  m.def(
      "derive_points",
      [](const std::string& secret, std::uint32_t n, std::uint32_t m) {
        const auto key = WatermarkKey::make(secret, n, m);
        const auto idx = derive_indices(key);
        const auto lab = derive_labels(key);
        std::vector<std::pair<std::uint32_t, int>> out;
        for (std::size_t i = 0; i < idx.size(); ++i) out.emplace_back(idx[i], lab[i]);
        return out;
      },
      py::arg("secret"), py::arg("n"), py::arg("m") = 0);
  m.def(
      "watermark_inputs",
      [](const std::string& secret, std::uint32_t n, std::uint32_t m, std::uint32_t dim) {
        const auto key = WatermarkKey::make(secret, n, m);
        const auto ds = build_wm_dataset(key, DomainEncoder::vector(dim, key.m));
        return py::make_tuple(to_numpy(ds.inputs), ds.labels());
      },
      py::arg("secret"), py::arg("n"), py::arg("m"), py::arg("dim"));

  m.def("chernoff_bound", &chernoff_bound, py::arg("p"), py::arg("gamma"), py::arg("n"), py::arg("lam"));
  m.def("optimize_lambda", &optimize_lambda, py::arg("p"), py::arg("gamma"));
  m.def(
      "recommend_gamma",
      [](double p_max, std::uint32_t n, double target, double step) -> py::object {
        auto r = recommend_gamma(p_max, n, target, step);
        if (!r) return py::none();
        return py::make_tuple(r->gamma, r->lambda, r->bound);
      },
      py::arg("p_max"), py::arg("n"), py::arg("target") = 1e-6, py::arg("step") = 0.05);

  m.def(
      "default_config", [] { return dump(config_to_json(ExperimentConfig{})); },
      "Default experiment configuration as JSON text.");
  m.def(
      "validate_config", [](const std::string& cfg) { return dump(config_to_json(config_of(cfg))); },
      py::arg("config"));
  m.def(
      "train",
      [](const std::string& cfg_text) {
        const auto cfg = config_of(cfg_text);
        PreparedData data;
        TrainedModel t;
        {
          py::gil_scoped_release release;
          data = prepare_data(cfg);
          t = train_pipeline(cfg, data);
        }
        return train_result(t, data.key);
      },
      py::arg("config"));
  m.def(
      "verify",
      [](const std::string& model_text, const std::string& key_text, const std::string& cwm_text,
         double gamma) {
        const auto model = deserialize_model(model_text);
        const auto head = deserialize_head(cwm_text);
        return dump(to_json(verify(model, key_of(key_text), head, gamma)));
      },
      py::arg("model"), py::arg("key"), py::arg("cwm"), py::arg("gamma") = 0.7);
  m.def(
      "model_hash", [](const std::string& model_text) { return to_hex(model_hash(deserialize_model(model_text))); },
      py::arg("model"));
  m.def(
      "run_attacks",
      [](const std::string& cfg_text, const std::string& model_full) {
        const auto cfg = config_of(cfg_text);
        const auto model = deserialize_model(model_full);
        json out = json::array();
        {
          py::gil_scoped_release release;
          const auto data = prepare_data(cfg);
          for (const auto& r : run_attacks(cfg, data, model)) out.push_back(to_json(r));
        }
        return dump(out);
      },
      py::arg("config"), py::arg("model_full"));
  m.def(
      "calibrate",
      [](const std::string& cfg_text, const std::string& model_full) {
        const auto cfg = config_of(cfg_text);
        const auto model = deserialize_model(model_full);
        return dump(to_json(run_calibration(cfg, model)));
      },
      py::arg("config"), py::arg("model_full"));
  m.def(
      "simulate",
      [](const std::string& sim_text, const std::string& scenario_text, const std::string& base_dir) {
        const auto cfg = notary::parse_sim_config(json::parse(sim_text));
        const auto scenario = notary::parse_scenario(json::parse(scenario_text), base_dir);
        const auto result = notary::run_simulation(cfg, scenario);
        return py::make_tuple(result.trace_jsonl(), dump(result.summary()));
      },
      py::arg("sim_config"), py::arg("scenario"), py::arg("base_dir") = ".");
  m.def(
      "ownership_story",
      [](const std::string& cfg_text) {
        const auto cfg = config_of(cfg_text);
        json summary;
        {
          py::gil_scoped_release release;
          const auto data = prepare_data(cfg);
          auto story = run_ownership_story(cfg, data);
          summary = story.sim.summary();
          summary["host_verifies_stolen"] = story.host_on_stolen.passed;
          summary["adversary_verifies_stolen"] = story.adversary_on_stolen.passed;
          summary["winner"] = story.winner ? json(*story.winner) : json(nullptr);
        }
        return dump(summary);
      },
      py::arg("config"));
}
