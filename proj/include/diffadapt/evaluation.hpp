#pragma once

// Oracle strategy selection, fixed-strategy baselines, routed evaluation and
// the token-savings metric.

#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "diffadapt/backend.hpp"
#include "diffadapt/core.hpp"
#include "diffadapt/strategy.hpp"

namespace diffadapt {

// Among correct outcomes the one with the fewest tokens, otherwise the one
// with the fewest tokens overall; ties go Easy, then Hard, then Normal.
// DomainError unless there is exactly one outcome per strategy.
StrategyId oracle_select(std::span<const StrategyOutcome> outcomes);

// Mean over benchmarks of (normal - method) / normal * 100. The map value is
// (tokens under Normal, tokens under the method). DomainError when a Normal
// mean is not positive or the map is empty.
double token_savings(const std::map<std::string, std::pair<double, double>>& per_benchmark);

struct SummaryRow {
  std::string name;       // strategy, "Oracle" or "Routed"
  std::string benchmark;  // "" for the pooled row
  std::size_t count = 0;
  double accuracy = 0.0;
  double accuracy_se = 0.0;
  double mean_tokens = 0.0;
  double tokens_se = 0.0;

  nlohmann::json to_json() const;
};

// Accuracy and token statistics of a list of outcomes, by benchmark (sorted)
// plus a pooled row with benchmark "". `benchmark_of` maps problem id to its
// benchmark; unknown ids pool under "".
std::vector<SummaryRow> summarize(const std::string& name, std::span<const StrategyOutcome> outcomes,
                                  const std::map<std::string, std::string>& benchmark_of);

std::map<std::string, std::string> benchmark_index(std::span<const Problem> problems);

struct EvalOptions {
  std::string model_name;
  double budget_scale = 1.0;
  std::optional<std::uint64_t> seed;
  int logprobs_top_k = 0;
  int jobs = 1;
  // Benchmarks the caller expects; those without problems are reported in
  // notes instead of as rows.
  std::vector<std::string> benchmarks;
};

struct FixedReport {
  StrategyId strategy = StrategyId::kNormal;
  std::vector<StrategyOutcome> outcomes;  // input order
  std::vector<GenerationRecord> records;  // successful completions
  std::vector<SummaryRow> rows;
  std::vector<std::string> notes;
  std::size_t failures = 0;
};

// Runs every problem once under one strategy with |Max| from the budget
// table. A failed completion counts as incorrect with zero tokens.
FixedReport evaluate_fixed(std::span<const Problem> problems, CompletionBackend& backend,
                           StrategyId strategy, const BudgetTable& budgets,
                           const EvalOptions& options);

struct RoutedReport {
  std::vector<RoutedResult> results;
  std::vector<StrategyOutcome> outcomes;  // strategy = routed label
  std::vector<SummaryRow> rows;
  std::size_t fallbacks = 0;
  std::size_t errors = 0;
  std::map<std::string, std::size_t> label_counts;
};

RoutedReport evaluate_routed(std::span<const Problem> problems, const Router& router, int jobs);

// Per-benchmark (Normal, method) mean tokens from two outcome lists over the
// same problems, keyed by benchmark.
std::map<std::string, std::pair<double, double>> token_pairs(
    std::span<const StrategyOutcome> normal, std::span<const StrategyOutcome> method,
    const std::map<std::string, std::string>& benchmark_of);

struct OracleReport {
  std::vector<SummaryRow> rows;  // Easy, Normal, Hard, Oracle per benchmark, then pooled
  std::map<std::string, StrategyId> choices;
  std::vector<std::string> excluded;  // problems without a complete triple
  std::vector<StrategyOutcome> oracle_outcomes;

  std::string to_csv() const;
  // [{benchmark, series: [{name, points: [[mean_tokens, accuracy]]}]}]
  nlohmann::json pareto() const;
};

OracleReport oracle_report(std::span<const StrategyOutcome> outcomes,
                           const std::map<std::string, std::string>& benchmark_of);

std::string rows_to_csv(std::span<const SummaryRow> rows);

}  // namespace diffadapt
