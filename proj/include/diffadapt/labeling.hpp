#pragma once

// Stage 1: sample each training problem n times with the proxy model, turn the
// samples into correctness and entropy statistics and label the problem Easy,
// Normal or Hard.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "diffadapt/backend.hpp"
#include "diffadapt/core.hpp"
#include "diffadapt/feature_file.hpp"
#include "diffadapt/uncertainty.hpp"

namespace diffadapt {

struct ProblemStats {
  std::string problem_id;
  double correctness = 0.0;
  double mean_entropy = 0.0;
  int n_samples = 0;
  int shortfall = 0;  // configured samples that failed

  bool operator==(const ProblemStats&) const = default;
};

struct LabeledExample {
  std::string problem_id;
  FeatureVector feature;
  DifficultyLabel label;
  ProblemStats stats;

  bool operator==(const LabeledExample&) const = default;
};

// Normal if C >= alpha and H <= beta; otherwise Hard if C < gamma; otherwise
// Easy. Throws DomainError on non-finite statistics.
DifficultyLabel assign_label(double correctness, double mean_entropy, const Thresholds& t);
DifficultyLabel assign_label(const ProblemStats& stats, const Thresholds& t);

// Per-model thresholds for the known proxy models; anything else gets
// (0.85, 0.35, 0.60) and a warning. `known` reports which case applied.
Thresholds default_thresholds(std::string_view model_name, bool* known = nullptr);

// "a,b,c" -> Thresholds.
Thresholds parse_thresholds(std::string_view text);

// Statistics over the usable samples of one problem. A sample is usable when
// it carries a verdict and a generation entropy; the rest count as shortfall
// against `configured_n`. Throws DomainError when no sample is usable.
ProblemStats compute_stats(const std::string& problem_id, std::span<const GenerationRecord> samples,
                           int configured_n);

struct SamplingConfig {
  int n = 10;
  double temperature = 0.6;
  int max_tokens = 32768;
  int top_k_logprobs = 20;
  std::uint64_t seed = 0;
  int jobs = 1;  // <= 0: hardware concurrency

  void validate() const;
  nlohmann::json to_json() const;
};

struct Exclusion {
  std::string problem_id;
  std::string reason;
};

struct DatasetResult {
  std::vector<LabeledExample> examples;  // input order, excluded problems removed
  std::vector<GenerationRecord> records;  // every successful sample, input order
  std::vector<Exclusion> excluded;
  nlohmann::json manifest;
};

// Algorithm: for every problem draw n completions (plain prompt, no strategy
// prefix), judge them, compute statistics, label, then fetch the problem's
// feature vector. Problems with more than half of their samples failed, or
// whose feature cannot be fetched, are excluded and listed in the manifest.
// Problems run in parallel (config.jobs); results keep input order.
DatasetResult generate_dataset(std::span<const Problem> problems, CompletionBackend& backend,
                               RepresentationProvider& provider, const SamplingConfig& config,
                               const Thresholds& thresholds);

// Labeled-dataset JSONL, one LabeledExample per line with the feature inline
// as {"dim", "values"}.
void save_labeled_dataset(const std::filesystem::path& path, std::span<const LabeledExample> data);
// Lines may instead omit "feature"; it is then looked up by problem id in
// `features` (LookupError if absent or no file is given).
std::vector<LabeledExample> load_labeled_dataset(const std::filesystem::path& path,
                                                 const FeatureFile* features = nullptr);

// The dataset's features as a feature file (float32 storage).
FeatureFile features_of(std::span<const LabeledExample> data, nlohmann::json trailer = nlohmann::json::object());

nlohmann::json label_distribution(std::span<const LabeledExample> data);

}  // namespace diffadapt
