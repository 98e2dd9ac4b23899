// Python bindings. Structured results cross the boundary as JSON text and are
// decoded by the pure-Python layer in diffadapt/__init__.py.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "diffadapt/cli.hpp"
#include "diffadapt/evaluation.hpp"
#include "diffadapt/feature_file.hpp"
#include "diffadapt/json_io.hpp"
#include "diffadapt/labeling.hpp"
#include "diffadapt/probe.hpp"
#include "diffadapt/simulator.hpp"
#include "diffadapt/strategy.hpp"
#include "diffadapt/uncertainty.hpp"
#include "diffadapt/verification.hpp"

namespace py = pybind11;
namespace da = diffadapt;
using nlohmann::json;

namespace {

std::string label_name(da::Difficulty d) { return std::string(da::to_string(d)); }

da::ProbeParameters params_from(std::size_t d, std::size_t h, const std::vector<double>& flat) {
  return da::ProbeParameters::from_flat(d, h, flat);
}

std::vector<da::TrainingExample> examples_from(const std::vector<std::vector<double>>& features,
                                               const std::vector<std::string>& labels) {
  if (features.size() != labels.size()) throw da::ValidationError("features and labels differ in length");
  std::vector<da::TrainingExample> out;
  out.reserve(features.size());
  for (std::size_t i = 0; i < features.size(); ++i) {
    out.push_back({da::FeatureVector(features[i]), da::parse_difficulty(labels[i])});
  }
  return out;
}

std::string train_json(const std::vector<std::vector<double>>& features,
                       const std::vector<std::string>& labels, int epochs, double lr,
                       double weight_decay, int batch_size, std::size_t hidden, std::uint64_t seed) {
  da::TrainConfig config;
  config.epochs = epochs;
  config.learning_rate = lr;
  config.weight_decay = weight_decay;
  config.batch_size = batch_size;
  config.hidden_dim = hidden;
  config.seed = seed;
  const auto data = examples_from(features, labels);
  std::optional<da::TrainResult> result;
  {
    py::gil_scoped_release release;
    result = da::train(data, config);
  }
  const da::TrainResult& r = *result;
  return json{{"input_dim", r.params.input_dim()},
              {"hidden_dim", r.params.hidden_dim()},
              {"params", r.params.flatten()},
              {"epoch_loss", r.epoch_loss},
              {"initial_loss", r.initial_loss},
              {"final_loss", r.final_loss},
              {"train_accuracy", r.train_accuracy},
              {"warnings", r.warnings}}
      .dump();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Difficulty-adaptive inference routing core";
  m.attr("__version__") = DIFFADAPT_VERSION;

  py::register_exception<da::DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<da::ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<da::FormatError>(m, "FormatError", PyExc_IOError);
  py::register_exception<da::LookupError>(m, "LookupError", PyExc_KeyError);

  // uncertainty
  m.def("token_entropy", [](const std::vector<double>& p) { return da::token_entropy(p); }, py::arg("probs"));
  m.def(
      "entropy_from_logprobs",
      [](const std::vector<double>& lp, const std::string& mode) {
        return da::entropy_from_logprobs(lp, da::parse_tail_mode(mode));
      },
      py::arg("logprobs"), py::arg("tail_mode") = "tail_bucket");
  m.def("mean_entropy", [](const std::vector<double>& h) { return da::mean_entropy(h); }, py::arg("entropies"));
  m.def("correctness_rate", [](const std::vector<bool>& v) { return da::correctness_rate(v); },
        py::arg("verdicts"));

  // verification
  m.def("extract_answer", [](const std::string& t) { return da::extract_answer(t); }, py::arg("text"));
  m.def("answers_equivalent", [](const std::string& a, const std::string& b) { return da::answers_equivalent(a, b); },
        py::arg("candidate"), py::arg("gold"));
  m.def("verdict", [](const std::string& t, const std::string& g) { return da::verdict(t, g); },
        py::arg("text"), py::arg("gold"));

  // labeling
  m.def(
      "assign_label",
      [](double c, double h, double alpha, double beta, double gamma) {
        return label_name(da::assign_label(c, h, da::Thresholds(alpha, beta, gamma)));
      },
      py::arg("correctness"), py::arg("mean_entropy"), py::arg("alpha"), py::arg("beta"), py::arg("gamma"));
  m.def(
      "default_thresholds",
      [](const std::string& model) {
        const auto t = da::default_thresholds(model);
        return py::make_tuple(t.alpha(), t.beta(), t.gamma());
      },
      py::arg("model"));

  // strategy
  m.def(
      "resolve_strategy",
      [](const std::string& label, int base_max, double scale) {
        return da::resolve_strategy(da::parse_difficulty(label), base_max, scale).to_json().dump();
      },
      py::arg("label"), py::arg("base_max_tokens"), py::arg("budget_scale") = 1.0);
  m.def(
      "budget",
      [](const std::string& model, const std::string& benchmark) {
        return da::BudgetTable::builtin().lookup(model, benchmark);
      },
      py::arg("model"), py::arg("benchmark"));

  // evaluation
  m.def(
      "oracle_select",
      [](const std::vector<std::tuple<std::string, bool, long>>& outcomes) {
        std::vector<da::StrategyOutcome> v;
        for (const auto& [s, ok, tokens] : outcomes) v.emplace_back("p", da::parse_difficulty(s), ok, tokens);
        return label_name(da::oracle_select(v));
      },
      py::arg("outcomes"));
  m.def(
      "token_savings",
      [](const std::map<std::string, std::pair<double, double>>& per_benchmark) {
        return da::token_savings(per_benchmark);
      },
      py::arg("per_benchmark"));

  // probe
  m.def(
      "probe_forward",
      [](std::size_t d, std::size_t h, const std::vector<double>& flat, const std::vector<double>& x) {
        return da::forward(params_from(d, h, flat), da::FeatureVector(x));
      },
      py::arg("input_dim"), py::arg("hidden_dim"), py::arg("params"), py::arg("feature"));
  m.def(
      "probe_predict",
      [](std::size_t d, std::size_t h, const std::vector<double>& flat, const std::vector<double>& x) {
        return label_name(da::predict(params_from(d, h, flat), da::FeatureVector(x)));
      },
      py::arg("input_dim"), py::arg("hidden_dim"), py::arg("params"), py::arg("feature"));
  m.def(
      "probe_loss",
      [](std::size_t d, std::size_t h, const std::vector<double>& flat,
         const std::vector<std::vector<double>>& features, const std::vector<std::string>& labels) {
        return da::loss(params_from(d, h, flat), examples_from(features, labels));
      },
      py::arg("input_dim"), py::arg("hidden_dim"), py::arg("params"), py::arg("features"), py::arg("labels"));
  m.def("train_probe_json", &train_json, py::arg("features"), py::arg("labels"), py::arg("epochs") = 100,
        py::arg("lr") = 1e-3, py::arg("weight_decay") = 0.01, py::arg("batch_size") = 64,
        py::arg("hidden_dim") = 128, py::arg("seed") = 0);
  m.def(
      "save_probe",
      [](const std::string& path, std::size_t d, std::size_t h, const std::vector<double>& flat,
         const std::string& fingerprint) { da::save_probe(params_from(d, h, flat), path, fingerprint); },
      py::arg("path"), py::arg("input_dim"), py::arg("hidden_dim"), py::arg("params"),
      py::arg("provider_fingerprint") = "");
  m.def(
      "load_probe_json",
      [](const std::string& path) {
        const auto f = da::load_probe(path);
        return json{{"input_dim", f.params.input_dim()},
                    {"hidden_dim", f.params.hidden_dim()},
                    {"params", f.params.flatten()},
                    {"provider_fingerprint", f.provider_fingerprint}}
            .dump();
      },
      py::arg("path"));

  // feature files
  m.def(
      "read_feature_file_json",
      [](const std::string& path) {
        const auto f = da::FeatureFile::read(path);
        json entries = json::array();
        for (const auto& e : f.entries()) entries.push_back(json{{"id", e.id}, {"values", e.values}});
        return json{{"dim", f.dim()}, {"entries", entries}, {"trailer", f.trailer()},
                    {"fingerprint", f.fingerprint()}}
            .dump();
      },
      py::arg("path"));

  // simulator
  m.def(
      "sim_complete_json",
      [](const std::string& problem_json, const std::string& strategy, int max_tokens, std::uint64_t seed,
         int sample_index) {
        const auto problem = json::parse(problem_json).get<da::Problem>();
        da::CompletionRequest req;
        req.strategy = da::parse_difficulty(strategy);
        req.max_tokens = max_tokens;
        req.sample_index = sample_index;
        auto rec = da::sim_complete(da::SimProfile::builtin_default(), problem, req, seed);
        rec = rec.with_verdict(da::verdict(rec, problem));
        return json(rec).dump();
      },
      py::arg("problem_json"), py::arg("strategy") = "Normal", py::arg("max_tokens") = 32768,
      py::arg("seed") = 0, py::arg("sample_index") = 0);
  m.def(
      "sim_representation",
      [](const std::string& problem_json, std::uint64_t seed) {
        const auto problem = json::parse(problem_json).get<da::Problem>();
        const auto f = da::sim_representation(da::SimProfile::builtin_default(), problem, seed);
        return std::vector<double>(f.values().begin(), f.values().end());
      },
      py::arg("problem_json"), py::arg("seed") = 0);

  // command line
  m.def(
      "run_command",
      [](const std::vector<std::string>& args) {
        py::gil_scoped_release release;
        return da::cli::run_command(args);
      },
      py::arg("args"));
}
