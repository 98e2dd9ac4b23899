#include "diffadapt/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "diffadapt/json_io.hpp"
#include "diffadapt/names.hpp"
#include "diffadapt/parallel.hpp"
#include "diffadapt/verification.hpp"

namespace diffadapt {

using nlohmann::json;

namespace {

std::string pooled_name(const std::string& benchmark) { return benchmark.empty() ? "all" : benchmark; }

SummaryRow summarize_group(const std::string& name, const std::string& benchmark,
                           std::vector<const StrategyOutcome*> group) {
  std::sort(group.begin(), group.end(), [](const auto* a, const auto* b) {
    return a->problem_id() < b->problem_id();
  });
  SummaryRow row;
  row.name = name;
  row.benchmark = benchmark;
  row.count = group.size();
  if (group.empty()) return row;
  const double n = static_cast<double>(group.size());
  double hits = 0.0, tokens = 0.0;
  for (const auto* o : group) {
    hits += o->correct() ? 1.0 : 0.0;
    tokens += static_cast<double>(o->tokens());
  }
  row.accuracy = hits / n;
  row.mean_tokens = tokens / n;
  row.accuracy_se = std::sqrt(row.accuracy * (1.0 - row.accuracy) / n);
  if (group.size() > 1) {
    double ss = 0.0;
    for (const auto* o : group) {
      const double dev = static_cast<double>(o->tokens()) - row.mean_tokens;
      ss += dev * dev;
    }
    row.tokens_se = std::sqrt(ss / (n - 1.0) / n);
  }
  return row;
}

std::string benchmark_for(const std::map<std::string, std::string>& index, const std::string& id) {
  const auto it = index.find(id);
  return it == index.end() ? std::string() : it->second;
}

}  // namespace

StrategyId oracle_select(std::span<const StrategyOutcome> outcomes) {
  std::array<const StrategyOutcome*, kNumClasses> by_strategy{};
  for (const auto& o : outcomes) {
    auto& slot = by_strategy[class_index(o.strategy_id())];
    if (slot != nullptr) {
      throw DomainError("duplicate " + std::string(to_string(o.strategy_id())) + " outcome for '" +
                        o.problem_id() + "'");
    }
    slot = &o;
  }
  for (auto id : kAllDifficulties) {
    if (by_strategy[class_index(id)] == nullptr) {
      throw DomainError("missing " + std::string(to_string(id)) + " outcome");
    }
  }
  const bool any_correct = std::any_of(outcomes.begin(), outcomes.end(),
                                       [](const StrategyOutcome& o) { return o.correct(); });
  const StrategyOutcome* best = nullptr;
  for (auto id : {StrategyId::kEasy, StrategyId::kHard, StrategyId::kNormal}) {
    const StrategyOutcome* o = by_strategy[class_index(id)];
    if (any_correct && !o->correct()) continue;
    if (best == nullptr || o->tokens() < best->tokens()) best = o;
  }
  return best->strategy_id();
}

double token_savings(const std::map<std::string, std::pair<double, double>>& per_benchmark) {
  if (per_benchmark.empty()) throw DomainError("token savings over zero benchmarks");
  double sum = 0.0;
  for (const auto& [bench, pair] : per_benchmark) {
    const auto [normal, method] = pair;
    if (!(normal > 0.0) || !std::isfinite(normal)) {
      throw DomainError("Normal token mean for '" + bench + "' must be positive");
    }
    if (!(method >= 0.0) || !std::isfinite(method)) {
      throw DomainError("method token mean for '" + bench + "' must be finite and >= 0");
    }
    sum += (normal - method) / normal * 100.0;
  }
  return sum / static_cast<double>(per_benchmark.size());
}

json SummaryRow::to_json() const {
  return json{{"name", name},
              {"benchmark", pooled_name(benchmark)},
              {"count", count},
              {"accuracy", accuracy},
              {"accuracy_se", accuracy_se},
              {"mean_tokens", mean_tokens},
              {"tokens_se", tokens_se}};
}

std::map<std::string, std::string> benchmark_index(std::span<const Problem> problems) {
  std::map<std::string, std::string> index;
  for (const auto& p : problems) index[p.id()] = p.benchmark();
  return index;
}

std::vector<SummaryRow> summarize(const std::string& name, std::span<const StrategyOutcome> outcomes,
                                  const std::map<std::string, std::string>& benchmark_of) {
  std::map<std::string, std::vector<const StrategyOutcome*>> groups;
  std::vector<const StrategyOutcome*> all;
  for (const auto& o : outcomes) {
    const std::string bench = benchmark_for(benchmark_of, o.problem_id());
    if (!bench.empty()) groups[bench].push_back(&o);
    all.push_back(&o);
  }
  std::vector<SummaryRow> rows;
  for (auto& [bench, group] : groups) rows.push_back(summarize_group(name, bench, group));
  rows.push_back(summarize_group(name, "", std::move(all)));
  return rows;
}

FixedReport evaluate_fixed(std::span<const Problem> problems, CompletionBackend& backend,
                           StrategyId strategy, const BudgetTable& budgets,
                           const EvalOptions& options) {
  FixedReport report;
  report.strategy = strategy;
  std::vector<std::optional<GenerationRecord>> records(problems.size());
  std::vector<std::optional<StrategyOutcome>> outcomes(problems.size());
  parallel_for(problems.size(), options.jobs, [&](std::size_t i) {
    const Problem& p = problems[i];
    const ResolvedStrategy resolved =
        resolve_strategy(strategy, budgets.lookup(options.model_name, p.benchmark()),
                         options.budget_scale);
    try {
      GenerationRecord r =
          backend.complete(p, resolved.to_request(options.logprobs_top_k, options.seed));
      r = r.with_verdict(verdict(r, p));
      outcomes[i].emplace(p.id(), strategy, *r.verdict(), r.completion_tokens());
      records[i] = std::move(r);
    } catch (const std::exception& e) {
      spdlog::warn("{} run of '{}' failed: {}", to_string(strategy), p.id(), e.what());
      outcomes[i].emplace(p.id(), strategy, false, 0);
    }
  });
  for (std::size_t i = 0; i < problems.size(); ++i) {
    report.outcomes.push_back(std::move(*outcomes[i]));
    if (records[i]) {
      report.records.push_back(std::move(*records[i]));
    } else {
      ++report.failures;
    }
  }
  report.rows = summarize(std::string(to_string(strategy)), report.outcomes, benchmark_index(problems));
  std::set<std::string> present;
  for (const auto& p : problems) present.insert(canonical_benchmark(p.benchmark()));
  for (const auto& b : options.benchmarks) {
    if (present.count(canonical_benchmark(b)) == 0) {
      report.notes.push_back("benchmark '" + b + "' has no problems; excluded from the report");
    }
  }
  if (report.failures > 0) {
    report.notes.push_back(std::to_string(report.failures) +
                           " completion(s) failed and were counted as incorrect");
  }
  return report;
}

RoutedReport evaluate_routed(std::span<const Problem> problems, const Router& router, int jobs) {
  RoutedReport report;
  report.results.resize(problems.size());
  parallel_for(problems.size(), jobs,
               [&](std::size_t i) { report.results[i] = router.route(problems[i]); });
  for (const auto& r : report.results) {
    if (r.fallback) ++report.fallbacks;
    ++report.label_counts[std::string(to_string(r.label))];
    if (!r.ok()) {
      ++report.errors;
      report.outcomes.emplace_back(r.problem_id, r.label, false, 0);
      continue;
    }
    report.outcomes.emplace_back(r.problem_id, r.label, r.record->verdict().value_or(false),
                                 r.record->completion_tokens());
  }
  report.rows = summarize("Routed", report.outcomes, benchmark_index(problems));
  return report;
}

std::map<std::string, std::pair<double, double>> token_pairs(
    std::span<const StrategyOutcome> normal, std::span<const StrategyOutcome> method,
    const std::map<std::string, std::string>& benchmark_of) {
  std::map<std::string, std::pair<double, double>> out;
  const auto n_rows = summarize("Normal", normal, benchmark_of);
  const auto m_rows = summarize("Method", method, benchmark_of);
  std::map<std::string, double> method_tokens;
  for (const auto& r : m_rows) method_tokens[r.benchmark] = r.mean_tokens;
  const bool has_benchmarks = n_rows.size() > 1;
  for (const auto& r : n_rows) {
    // With named benchmarks the pooled row is redundant.
    if (has_benchmarks && r.benchmark.empty()) continue;
    const auto it = method_tokens.find(r.benchmark);
    if (it == method_tokens.end()) continue;
    out[pooled_name(r.benchmark)] = {r.mean_tokens, it->second};
  }
  return out;
}

OracleReport oracle_report(std::span<const StrategyOutcome> outcomes,
                           const std::map<std::string, std::string>& benchmark_of) {
  OracleReport report;
  std::map<std::string, std::vector<StrategyOutcome>> by_problem;
  for (const auto& o : outcomes) by_problem[o.problem_id()].push_back(o);

  std::vector<StrategyOutcome> kept;
  for (auto& [id, triple] : by_problem) {
    StrategyId choice;
    try {
      choice = oracle_select(triple);
    } catch (const DomainError& e) {
      spdlog::warn("oracle: excluding '{}': {}", id, e.what());
      report.excluded.push_back(id);
      continue;
    }
    report.choices[id] = choice;
    for (const auto& o : triple) {
      kept.push_back(o);
      if (o.strategy_id() == choice) report.oracle_outcomes.emplace_back(id, choice, o.correct(), o.tokens());
    }
  }

  std::map<std::string, std::vector<SummaryRow>> per_bench;
  auto add_rows = [&](std::vector<SummaryRow> rows) {
    for (auto& r : rows) per_bench[r.benchmark].push_back(std::move(r));
  };
  for (auto id : {StrategyId::kEasy, StrategyId::kNormal, StrategyId::kHard}) {
    std::vector<StrategyOutcome> subset;
    for (const auto& o : kept) {
      if (o.strategy_id() == id) subset.push_back(o);
    }
    add_rows(summarize(std::string(to_string(id)), subset, benchmark_of));
  }
  add_rows(summarize("Oracle", report.oracle_outcomes, benchmark_of));
  for (auto& [bench, rows] : per_bench) {
    if (bench.empty()) continue;
    for (auto& r : rows) report.rows.push_back(std::move(r));
  }
  for (auto& r : per_bench[""]) report.rows.push_back(std::move(r));
  return report;
}

std::string rows_to_csv(std::span<const SummaryRow> rows) {
  std::ostringstream out;
  out.precision(10);
  out << "benchmark,name,count,accuracy,accuracy_se,mean_tokens,tokens_se\n";
  for (const auto& r : rows) {
    out << pooled_name(r.benchmark) << ',' << r.name << ',' << r.count << ',' << r.accuracy << ','
        << r.accuracy_se << ',' << r.mean_tokens << ',' << r.tokens_se << '\n';
  }
  return out.str();
}

std::string OracleReport::to_csv() const { return rows_to_csv(rows); }

json OracleReport::pareto() const {
  std::map<std::string, json> by_bench;
  for (const auto& r : rows) {
    auto& entry = by_bench[pooled_name(r.benchmark)];
    if (entry.is_null()) entry = json{{"benchmark", pooled_name(r.benchmark)}, {"series", json::array()}};
    entry["series"].push_back(
        json{{"name", r.name}, {"points", json::array({json::array({r.mean_tokens, r.accuracy})})}});
  }
  json out = json::array();
  for (auto& [_, entry] : by_bench) out.push_back(std::move(entry));
  return out;
}

}  // namespace diffadapt
