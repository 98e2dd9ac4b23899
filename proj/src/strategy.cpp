#include "diffadapt/strategy.hpp"

#include <cmath>

#include <spdlog/spdlog.h>

#include "diffadapt/io.hpp"
#include "diffadapt/json_io.hpp"
#include "diffadapt/names.hpp"
#include "diffadapt/verification.hpp"

namespace diffadapt {

using nlohmann::json;

BudgetTable::BudgetTable(int default_max_tokens) : default_max_tokens_(default_max_tokens) {
  if (default_max_tokens_ < 1) throw ValidationError("default_max_tokens must be >= 1");
}

const BudgetTable& BudgetTable::builtin() {
  static const BudgetTable kTable = [] {
    BudgetTable t;
    const char* benchmarks[] = {"gsm8k",         "math",    "aime24",   "aime25",
                                "olympiadbench", "minerva", "mmlu-pro", "gpqa"};
    struct Row {
      const char* model;
      int values[8];
    };
    const Row rows[] = {
        {"Qwen3-4B", {1500, 12000, 18000, 18000, 15000, 3500, 3000, 4000}},
        {"DeepSeek-R1-Distill-Qwen-7B", {500, 3000, 15000, 16000, 5500, 1750, 3000, 5500}},
        {"DeepSeek-R1-Distill-Llama-8B", {700, 3000, 14000, 14000, 5500, 1750, 1750, 3000}},
        {"Nemotron-1.5B", {3500, 4000, 7000, 6000, 5500, 5000, 3500, 5000}},
        {"ThinkPrune-7B", {500, 3000, 15000, 14000, 5500, 1750, 2500, 4500}},
    };
    for (const auto& row : rows) {
      for (std::size_t b = 0; b < 8; ++b) t.set(row.model, benchmarks[b], row.values[b]);
    }
    return t;
  }();
  return kTable;
}

BudgetTable BudgetTable::from_json(const json& j) {
  try {
    if (!j.is_object()) throw ValidationError("budget table must be a JSON object");
    for (const auto& [key, _] : j.items()) {
      if (key != "default_max_tokens" && key != "budgets") {
        throw ValidationError("unknown budget table key '" + key + "'");
      }
    }
    BudgetTable t(j.value("default_max_tokens", kDefaultMaxTokens));
    if (j.contains("budgets")) {
      for (const auto& [model, row] : j.at("budgets").items()) {
        for (const auto& [bench, value] : row.items()) {
          if (!value.is_number_integer()) {
            throw ValidationError("budget for " + model + "/" + bench + " must be an integer");
          }
          t.set(model, bench, value.get<int>());
        }
      }
    }
    return t;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed budget table: ") + e.what());
  }
}

BudgetTable BudgetTable::load(const std::filesystem::path& path) {
  try {
    return from_json(json::parse(io::read_file(path)));
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

json BudgetTable::to_json() const {
  json budgets = json::object();
  for (const auto& [model, row] : table_) {
    for (const auto& [bench, value] : row) budgets[model][bench] = value;
  }
  return json{{"default_max_tokens", default_max_tokens_}, {"budgets", std::move(budgets)}};
}

void BudgetTable::set(std::string_view model, std::string_view benchmark, int max_tokens) {
  if (max_tokens < 1) {
    throw ValidationError("budget for " + std::string(model) + "/" + std::string(benchmark) +
                          " must be a positive integer");
  }
  table_[canonical_model(model)][canonical_benchmark(benchmark)] = max_tokens;
}

bool BudgetTable::contains(std::string_view model, std::string_view benchmark) const {
  const auto row = table_.find(canonical_model(model));
  return row != table_.end() && row->second.count(canonical_benchmark(benchmark)) != 0;
}

int BudgetTable::lookup(std::string_view model, std::string_view benchmark) const {
  const auto row = table_.find(canonical_model(model));
  if (row == table_.end()) return default_max_tokens_;
  const auto it = row->second.find(canonical_benchmark(benchmark));
  return it == row->second.end() ? default_max_tokens_ : it->second;
}

std::size_t BudgetTable::size() const {
  std::size_t n = 0;
  for (const auto& [_, row] : table_) n += row.size();
  return n;
}

CompletionRequest ResolvedStrategy::to_request(int logprobs_top_k, std::optional<std::uint64_t> seed,
                                               int sample_index) const {
  CompletionRequest r;
  r.prompt_prefix = prompt_prefix;
  r.close_reasoning_block = close_reasoning_block;
  r.temperature = temperature;
  r.top_p = top_p;
  r.max_tokens = max_tokens;
  r.logprobs_top_k = logprobs_top_k;
  r.seed = seed;
  r.strategy = id;
  r.sample_index = sample_index;
  return r;
}

json ResolvedStrategy::to_json() const {
  return json{{"strategy", id},
              {"temperature", temperature},
              {"top_p", top_p ? json(*top_p) : json()},
              {"base_max_tokens", base_max_tokens},
              {"max_tokens", max_tokens},
              {"prompt_prefix", prompt_prefix},
              {"close_reasoning_block", close_reasoning_block},
              {"floored", floored}};
}

ResolvedStrategy resolve_strategy(const StrategyConfig& config, int base_max_tokens,
                                  double budget_scale) {
  if (base_max_tokens < 1) throw DomainError("base max tokens must be >= 1");
  if (!(budget_scale > 0.0) || !std::isfinite(budget_scale)) {
    throw DomainError("budget scale must be positive");
  }
  ResolvedStrategy r;
  r.id = config.id();
  r.temperature = config.temperature();
  r.top_p = config.top_p();
  r.prompt_prefix = config.prompt_prefix();
  r.close_reasoning_block = config.id() == StrategyId::kEasy;
  r.base_max_tokens = budget_scale == 1.0
                          ? base_max_tokens
                          : static_cast<int>(std::floor(budget_scale * base_max_tokens));
  if (r.base_max_tokens < 1) r.base_max_tokens = 1;
  const double scaled = std::floor(config.max_token_fraction() * r.base_max_tokens);
  if (scaled < 1.0) {
    spdlog::warn("{} budget {} x {} is below one token; using 1", to_string(config.id()),
                 config.max_token_fraction(), r.base_max_tokens);
    r.max_tokens = 1;
    r.floored = true;
  } else {
    r.max_tokens = static_cast<int>(scaled);
  }
  return r;
}

ResolvedStrategy resolve_strategy(StrategyId id, int base_max_tokens, double budget_scale) {
  return resolve_strategy(default_strategy(id), base_max_tokens, budget_scale);
}

json RoutedResult::to_json() const {
  json j{{"problem_id", problem_id},
         {"label", label},
         {"probabilities", probabilities ? json(*probabilities) : json()},
         {"params", params.to_json()},
         {"fallback", fallback}};
  if (fallback) j["fallback_reason"] = fallback_reason;
  if (record) j["record"] = *record;
  if (error) j["error"] = *error;
  return j;
}

Router::Router(std::shared_ptr<const ProbeParameters> probe,
               std::shared_ptr<CompletionBackend> backend,
               std::shared_ptr<RepresentationProvider> provider,
               std::shared_ptr<const BudgetTable> budgets, RouterOptions options)
    : probe_(std::move(probe)),
      backend_(std::move(backend)),
      provider_(std::move(provider)),
      budgets_(std::move(budgets)),
      options_(std::move(options)) {
  if (!probe_ || !backend_ || !provider_ || !budgets_) {
    throw ValidationError("router needs a probe, a backend, a provider and a budget table");
  }
}

Classification Router::classify(const FeatureVector& feature) const {
  const ClassScores z = logits(*probe_, feature);
  return Classification{argmax_label(z), softmax(z)};
}

RoutedResult Router::route(const Problem& problem, int sample_index,
                           const std::optional<std::string>& model_override) const {
  RoutedResult result;
  result.problem_id = problem.id();
  try {
    const FeatureVector feature = provider_->represent(problem);
    const Classification c = classify(feature);
    result.label = c.label;
    result.probabilities = c.probabilities;
  } catch (const std::exception& e) {
    result.label = DifficultyLabel::kNormal;
    result.fallback = true;
    result.fallback_reason = e.what();
    spdlog::debug("routing '{}' with Normal fallback: {}", problem.id(), e.what());
  }
  const std::string& model = model_override ? *model_override : options_.model_name;
  result.params = resolve_strategy(result.label, budgets_->lookup(model, problem.benchmark()),
                                   options_.budget_scale);
  try {
    GenerationRecord record = backend_->complete(
        problem, result.params.to_request(options_.logprobs_top_k, options_.seed, sample_index));
    if (record.completion_tokens() > result.params.max_tokens) {
      throw BackendError("backend exceeded the resolved budget (" +
                         std::to_string(record.completion_tokens()) + " > " +
                         std::to_string(result.params.max_tokens) + ")");
    }
    if (!problem.gold_answer().empty()) record = record.with_verdict(verdict(record, problem));
    result.record = std::move(record);
  } catch (const std::exception& e) {
    result.error = e.what();
  }
  return result;
}

}  // namespace diffadapt
