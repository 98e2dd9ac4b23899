#include "diffadapt/labeling.hpp"

#include <cmath>
#include <map>
#include <sstream>

#include <spdlog/spdlog.h>

#include "diffadapt/io.hpp"
#include "diffadapt/json_io.hpp"
#include "diffadapt/names.hpp"
#include "diffadapt/parallel.hpp"
#include "diffadapt/verification.hpp"

namespace diffadapt {

using nlohmann::json;

DifficultyLabel assign_label(double correctness, double mean_entropy, const Thresholds& t) {
  if (!std::isfinite(correctness) || !std::isfinite(mean_entropy)) {
    throw DomainError("assign_label: statistics must be finite");
  }
  if (correctness >= t.alpha() && mean_entropy <= t.beta()) return DifficultyLabel::kNormal;
  if (correctness < t.gamma()) return DifficultyLabel::kHard;
  return DifficultyLabel::kEasy;
}

DifficultyLabel assign_label(const ProblemStats& stats, const Thresholds& t) {
  return assign_label(stats.correctness, stats.mean_entropy, t);
}

Thresholds default_thresholds(std::string_view model_name, bool* known) {
  static const std::map<std::string, Thresholds, std::less<>> kTable = {
      {"deepseekr1qwen7b", Thresholds(0.85, 0.35, 0.60)},
      {"deepseekr1llama8b", Thresholds(0.85, 0.35, 0.60)},
      {"qwen34b", Thresholds(0.88, 0.32, 0.65)},
  };
  const auto it = kTable.find(canonical_model(model_name));
  if (known != nullptr) *known = it != kTable.end();
  if (it != kTable.end()) return it->second;
  spdlog::warn("no labeling thresholds for model '{}'; using (0.85, 0.35, 0.60)", model_name);
  return Thresholds(0.85, 0.35, 0.60);
}

Thresholds parse_thresholds(std::string_view text) {
  std::vector<double> values;
  std::stringstream ss{std::string(text)};
  std::string part;
  while (std::getline(ss, part, ',')) {
    try {
      std::size_t used = 0;
      values.push_back(std::stod(part, &used));
      while (used < part.size() && std::isspace(static_cast<unsigned char>(part[used]))) ++used;
      if (used != part.size()) throw std::invalid_argument(part);
    } catch (const std::exception&) {
      throw ValidationError("thresholds must be 'alpha,beta,gamma' numbers, got '" +
                            std::string(text) + "'");
    }
  }
  if (values.size() != 3) {
    throw ValidationError("thresholds need exactly three values, got '" + std::string(text) + "'");
  }
  return Thresholds(values[0], values[1], values[2]);
}

ProblemStats compute_stats(const std::string& problem_id, std::span<const GenerationRecord> samples,
                           int configured_n) {
  std::vector<bool> verdicts;
  std::vector<double> entropies;
  for (const auto& r : samples) {
    if (!r.verdict() || !r.generation_entropy()) continue;
    verdicts.push_back(*r.verdict());
    entropies.push_back(*r.generation_entropy());
  }
  if (verdicts.empty()) {
    throw DomainError("no usable samples (verdict and entropy) for problem '" + problem_id + "'");
  }
  ProblemStats stats;
  stats.problem_id = problem_id;
  stats.correctness = correctness_rate(verdicts);
  stats.mean_entropy = mean_entropy(entropies);
  stats.n_samples = static_cast<int>(verdicts.size());
  stats.shortfall = std::max(0, configured_n - stats.n_samples);
  return stats;
}

void SamplingConfig::validate() const {
  if (n < 1) throw ValidationError("sampling n must be >= 1");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw ValidationError("sampling temperature must be positive");
  }
  if (max_tokens < 1) throw ValidationError("sampling max_tokens must be >= 1");
  if (top_k_logprobs < 1) {
    throw ValidationError("labeling needs entropies: top_k_logprobs must be >= 1");
  }
}

json SamplingConfig::to_json() const {
  return json{{"n", n},
              {"temperature", temperature},
              {"max_tokens", max_tokens},
              {"top_k_logprobs", top_k_logprobs},
              {"seed", seed},
              {"jobs", jobs}};
}

namespace {

struct ProblemOutcome {
  std::vector<GenerationRecord> records;
  std::optional<LabeledExample> example;
  std::optional<std::string> exclusion;
  int shortfall = 0;
};

ProblemOutcome process_problem(const Problem& problem, CompletionBackend& backend,
                               RepresentationProvider& provider, const SamplingConfig& config,
                               const Thresholds& thresholds) {
  ProblemOutcome out;
  int failed = 0;
  std::string last_error;
  for (int j = 0; j < config.n; ++j) {
    CompletionRequest request;
    request.temperature = config.temperature;
    request.max_tokens = config.max_tokens;
    request.logprobs_top_k = config.top_k_logprobs;
    request.seed = config.seed;
    request.strategy = StrategyId::kNormal;
    request.sample_index = j;
    try {
      GenerationRecord r = backend.complete(problem, request);
      if (!r.generation_entropy()) {
        ++failed;
        last_error = "sample carried no token entropies";
        continue;
      }
      out.records.push_back(r.with_verdict(verdict(r, problem)));
    } catch (const std::exception& e) {
      ++failed;
      last_error = e.what();
      spdlog::debug("sample {} of '{}' failed: {}", j, problem.id(), e.what());
    }
  }
  out.shortfall = failed;
  if (2 * failed > config.n) {
    out.exclusion = std::to_string(failed) + " of " + std::to_string(config.n) +
                    " samples failed (last: " + last_error + ")";
    return out;
  }
  ProblemStats stats = compute_stats(problem.id(), out.records, config.n);
  const DifficultyLabel label = assign_label(stats, thresholds);
  try {
    FeatureVector feature = provider.represent(problem);
    out.example = LabeledExample{problem.id(), std::move(feature), label, std::move(stats)};
  } catch (const std::exception& e) {
    out.exclusion = std::string("feature retrieval failed: ") + e.what();
  }
  return out;
}

json stats_to_json(const ProblemStats& s) {
  return json{{"problem_id", s.problem_id},
              {"correctness", s.correctness},
              {"mean_entropy", s.mean_entropy},
              {"n_samples", s.n_samples},
              {"shortfall", s.shortfall}};
}

ProblemStats stats_from_json(const json& j) {
  ProblemStats s;
  s.problem_id = j.at("problem_id").get<std::string>();
  s.correctness = j.at("correctness").get<double>();
  s.mean_entropy = j.at("mean_entropy").get<double>();
  s.n_samples = j.at("n_samples").get<int>();
  s.shortfall = j.value("shortfall", 0);
  if (!(s.correctness >= 0.0 && s.correctness <= 1.0)) {
    throw ValidationError("correctness outside [0, 1] for '" + s.problem_id + "'");
  }
  if (!(s.mean_entropy >= 0.0) || !std::isfinite(s.mean_entropy)) {
    throw ValidationError("mean_entropy must be finite and >= 0 for '" + s.problem_id + "'");
  }
  if (s.n_samples < 1) throw ValidationError("n_samples must be >= 1 for '" + s.problem_id + "'");
  return s;
}

}  // namespace

json label_distribution(std::span<const LabeledExample> data) {
  json j = json::object();
  for (auto d : kAllDifficulties) j[std::string(to_string(d))] = 0;
  for (const auto& e : data) {
    auto& slot = j[std::string(to_string(e.label))];
    slot = slot.get<int>() + 1;
  }
  return j;
}

DatasetResult generate_dataset(std::span<const Problem> problems, CompletionBackend& backend,
                               RepresentationProvider& provider, const SamplingConfig& config,
                               const Thresholds& thresholds) {
  config.validate();
  const std::string started = io::utc_timestamp();
  std::vector<ProblemOutcome> outcomes(problems.size());
  parallel_for(problems.size(), config.jobs, [&](std::size_t i) {
    outcomes[i] = process_problem(problems[i], backend, provider, config, thresholds);
  });

  DatasetResult result;
  json shortfalls = json::object();
  std::optional<std::size_t> dim;
  for (std::size_t i = 0; i < problems.size(); ++i) {
    auto& o = outcomes[i];
    if (o.shortfall > 0) shortfalls[problems[i].id()] = o.shortfall;
    for (auto& r : o.records) result.records.push_back(std::move(r));
    if (o.example && dim && o.example->feature.dim() != *dim) {
      o.exclusion = "feature dimension " + std::to_string(o.example->feature.dim()) +
                    " differs from the dataset's " + std::to_string(*dim);
      o.example.reset();
    }
    if (o.exclusion) {
      spdlog::warn("excluding '{}': {}", problems[i].id(), *o.exclusion);
      result.excluded.push_back({problems[i].id(), *o.exclusion});
      continue;
    }
    if (!dim) dim = o.example->feature.dim();
    result.examples.push_back(std::move(*o.example));
  }

  json excluded = json::array();
  for (const auto& e : result.excluded) {
    excluded.push_back(json{{"problem_id", e.problem_id}, {"reason", e.reason}});
  }
  result.manifest = json{
      {"stage", "generate"},
      {"sampling", config.to_json()},
      {"thresholds", thresholds},
      {"backend", backend.describe()},
      {"provider_fingerprint", provider.fingerprint()},
      {"started", started},
      {"finished", io::utc_timestamp()},
      {"problems", problems.size()},
      {"labeled", result.examples.size()},
      {"records", result.records.size()},
      {"feature_dim", dim ? json(*dim) : json()},
      {"label_distribution", label_distribution(result.examples)},
      {"sample_shortfalls", std::move(shortfalls)},
      {"excluded", std::move(excluded)},
  };
  return result;
}

void save_labeled_dataset(const std::filesystem::path& path, std::span<const LabeledExample> data) {
  std::string out;
  for (const auto& e : data) {
    const json line{{"problem_id", e.problem_id},
                    {"label", e.label},
                    {"feature", e.feature},
                    {"stats", stats_to_json(e.stats)}};
    out += line.dump();
    out += '\n';
  }
  io::write_file(path, out);
}

std::vector<LabeledExample> load_labeled_dataset(const std::filesystem::path& path,
                                                 const FeatureFile* features) {
  std::vector<LabeledExample> data;
  std::size_t line_no = 0;
  std::optional<std::size_t> dim;
  for (const auto& line : io::read_lines(path)) {
    ++line_no;
    const std::string where = path.string() + ":" + std::to_string(line_no) + ": ";
    try {
      const json j = json::parse(line);
      const std::string id = j.at("problem_id").get<std::string>();
      std::optional<FeatureVector> feature;
      if (j.contains("feature") && !j["feature"].is_null()) {
        feature = j["feature"].get<FeatureVector>();
      } else if (features != nullptr) {
        feature = features->lookup(id);
      } else {
        throw LookupError("no inline feature and no feature file for '" + id + "'");
      }
      if (dim && feature->dim() != *dim) {
        throw ValidationError("feature dimension " + std::to_string(feature->dim()) +
                              " differs from earlier lines (" + std::to_string(*dim) + ")");
      }
      dim = feature->dim();
      ProblemStats stats = stats_from_json(j.at("stats"));
      data.push_back(LabeledExample{id, std::move(*feature), j.at("label").get<Difficulty>(),
                                    std::move(stats)});
    } catch (const json::exception& e) {
      throw FormatError(where + e.what());
    } catch (const ValidationError& e) {
      throw ValidationError(where + e.what());
    } catch (const LookupError& e) {
      throw LookupError(where + e.what());
    }
  }
  return data;
}

FeatureFile features_of(std::span<const LabeledExample> data, json trailer) {
  if (data.empty()) throw ValidationError("features_of: empty dataset");
  FeatureFile file(static_cast<std::uint32_t>(data.front().feature.dim()), std::move(trailer));
  for (const auto& e : data) file.add(e.problem_id, e.feature.values());
  return file;
}

}  // namespace diffadapt
