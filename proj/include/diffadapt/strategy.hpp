#pragma once

// Stage 3: difficulty label -> concrete generation request, and the router
// that ties probe, budgets and backend together.

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include <json.hpp>

#include "diffadapt/backend.hpp"
#include "diffadapt/core.hpp"
#include "diffadapt/probe.hpp"

namespace diffadapt {

inline constexpr int kDefaultMaxTokens = 32768;

// Base token budgets |Max| per (model, benchmark). Keys are canonicalised with
// canonical_model / canonical_benchmark; unknown pairs get the default.
class BudgetTable {
 public:
  explicit BudgetTable(int default_max_tokens = kDefaultMaxTokens);

  // The published per-model table (5 models x 8 benchmarks).
  static const BudgetTable& builtin();
  // {"default_max_tokens": N, "budgets": {"<model>": {"<benchmark>": N}}}
  static BudgetTable from_json(const nlohmann::json& j);
  static BudgetTable load(const std::filesystem::path& path);
  nlohmann::json to_json() const;

  void set(std::string_view model, std::string_view benchmark, int max_tokens);
  bool contains(std::string_view model, std::string_view benchmark) const;
  int lookup(std::string_view model, std::string_view benchmark) const;
  int default_max_tokens() const { return default_max_tokens_; }
  std::size_t size() const;

 private:
  int default_max_tokens_;
  std::map<std::string, std::map<std::string, int>> table_;
};

struct ResolvedStrategy {
  StrategyId id = StrategyId::kNormal;
  double temperature = 0.0;
  std::optional<double> top_p;
  int base_max_tokens = 0;  // |Max| after budget scaling
  int max_tokens = 0;
  std::string prompt_prefix;
  bool close_reasoning_block = false;
  bool floored = false;  // fraction * |Max| fell below one token

  CompletionRequest to_request(int logprobs_top_k, std::optional<std::uint64_t> seed,
                               int sample_index = 0) const;
  nlohmann::json to_json() const;
};

// max_tokens = floor(fraction * |Max|), raised to 1 with a warning when that
// is zero. budget_scale multiplies |Max| first (truncation sweeps).
ResolvedStrategy resolve_strategy(StrategyId id, int base_max_tokens, double budget_scale = 1.0);
ResolvedStrategy resolve_strategy(const StrategyConfig& config, int base_max_tokens,
                                  double budget_scale = 1.0);

struct RouterOptions {
  std::string model_name;
  double budget_scale = 1.0;
  int logprobs_top_k = 20;
  std::optional<std::uint64_t> seed;
};

struct RoutedResult {
  std::string problem_id;
  DifficultyLabel label = DifficultyLabel::kNormal;
  std::optional<ClassScores> probabilities;  // absent on fallback
  ResolvedStrategy params;
  std::optional<GenerationRecord> record;  // verdict set when the problem has a gold answer
  bool fallback = false;
  std::string fallback_reason;
  std::optional<std::string> error;  // completion failure

  bool ok() const { return !error.has_value(); }
  nlohmann::json to_json() const;
};

struct Classification {
  DifficultyLabel label;
  ClassScores probabilities;
};

// Thread-safe: all members are read-only after construction (the backend and
// provider must themselves be safe for concurrent calls).
class Router {
 public:
  Router(std::shared_ptr<const ProbeParameters> probe, std::shared_ptr<CompletionBackend> backend,
         std::shared_ptr<RepresentationProvider> provider, std::shared_ptr<const BudgetTable> budgets,
         RouterOptions options);

  // Representation failures (including a dimension mismatch) fall back to the
  // Normal strategy with fallback = true; completion failures are reported in
  // RoutedResult::error. Never throws for per-problem failures.
  RoutedResult route(const Problem& problem, int sample_index = 0,
                     const std::optional<std::string>& model_override = std::nullopt) const;

  // DomainError on dimension mismatch.
  Classification classify(const FeatureVector& feature) const;

  const ProbeParameters& probe() const { return *probe_; }
  CompletionBackend& backend() const { return *backend_; }
  RepresentationProvider& provider() const { return *provider_; }
  const BudgetTable& budgets() const { return *budgets_; }
  const RouterOptions& options() const { return options_; }

 private:
  std::shared_ptr<const ProbeParameters> probe_;
  std::shared_ptr<CompletionBackend> backend_;
  std::shared_ptr<RepresentationProvider> provider_;
  std::shared_ptr<const BudgetTable> budgets_;
  RouterOptions options_;
};

}  // namespace diffadapt
