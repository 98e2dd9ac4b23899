#pragma once

// Shared domain types for the difficulty-adaptive router. Every type checks
// its invariants in its constructor and is immutable afterwards.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace diffadapt {

// Error vocabulary. DomainError: a mathematical precondition failed.
// ValidationError: a value or input violates a declared invariant.
// FormatError: a file or wire payload is malformed. LookupError: a keyed
// resource (feature id, model, rating) is absent.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class LookupError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

// Class order is fixed globally: Easy = 0, Normal = 1, Hard = 2. The same
// enum names both the difficulty label and the strategy it selects.
enum class Difficulty : std::uint8_t { kEasy = 0, kNormal = 1, kHard = 2 };
using StrategyId = Difficulty;
using DifficultyLabel = Difficulty;

inline constexpr std::size_t kNumClasses = 3;
inline constexpr std::array<Difficulty, kNumClasses> kAllDifficulties = {
    Difficulty::kEasy, Difficulty::kNormal, Difficulty::kHard};

constexpr std::size_t class_index(Difficulty d) { return static_cast<std::size_t>(d); }
Difficulty difficulty_from_index(std::size_t index);

// "Easy" / "Normal" / "Hard".
std::string_view to_string(Difficulty d);
// Case-insensitive; throws ValidationError on anything else.
Difficulty parse_difficulty(std::string_view text);

class Problem {
 public:
  Problem(std::string id, std::string question, std::string gold_answer,
          std::optional<int> difficulty_rating = std::nullopt,
          std::string benchmark = {}, std::string split = {});

  const std::string& id() const { return id_; }
  const std::string& question() const { return question_; }
  const std::string& gold_answer() const { return gold_answer_; }
  std::optional<int> difficulty_rating() const { return difficulty_rating_; }
  const std::string& benchmark() const { return benchmark_; }
  const std::string& split() const { return split_; }

  bool operator==(const Problem&) const = default;

 private:
  std::string id_;
  std::string question_;
  std::string gold_answer_;
  std::optional<int> difficulty_rating_;
  std::string benchmark_;
  std::string split_;
};

inline constexpr int kMinRating = 1;
inline constexpr int kMaxRating = 10;

struct Alternative {
  std::string token;
  double logprob = 0.0;

  bool operator==(const Alternative&) const = default;
};

// One generated position: the sampled token, the top-k alternatives the
// backend reported (sorted by descending logprob, chosen token included) and
// the entropy of the sampling distribution at that position.
class TokenStep {
 public:
  TokenStep(std::string token_text, double chosen_logprob,
            std::vector<Alternative> alternatives, double entropy_nats);

  const std::string& token_text() const { return token_text_; }
  double chosen_logprob() const { return chosen_logprob_; }
  const std::vector<Alternative>& alternatives() const { return alternatives_; }
  double entropy_nats() const { return entropy_nats_; }

  bool operator==(const TokenStep&) const = default;

 private:
  std::string token_text_;
  double chosen_logprob_;
  std::vector<Alternative> alternatives_;
  double entropy_nats_;
};

enum class FinishReason : std::uint8_t { kStop, kLength, kError };
std::string_view to_string(FinishReason r);
FinishReason parse_finish_reason(std::string_view text);

// One sampled completion.
//
// When steps are present, completion_tokens must equal steps.size() and the
// generation entropy is the mean of the per-step entropies (computed here if
// not supplied, checked if supplied). Without steps the entropy may be absent
// (live backend without logprobs) or carried as a summary value.
class GenerationRecord {
 public:
  GenerationRecord(std::string problem_id, StrategyId strategy_id, int sample_index,
                   std::string completion_text, std::vector<TokenStep> steps,
                   int completion_tokens, FinishReason finish_reason,
                   std::optional<double> generation_entropy = std::nullopt,
                   std::optional<bool> verdict = std::nullopt);

  const std::string& problem_id() const { return problem_id_; }
  StrategyId strategy_id() const { return strategy_id_; }
  int sample_index() const { return sample_index_; }
  const std::string& completion_text() const { return completion_text_; }
  const std::vector<TokenStep>& steps() const { return steps_; }
  bool has_steps() const { return !steps_.empty(); }
  int completion_tokens() const { return completion_tokens_; }
  FinishReason finish_reason() const { return finish_reason_; }
  std::optional<double> generation_entropy() const { return generation_entropy_; }
  std::optional<bool> verdict() const { return verdict_; }

  GenerationRecord with_verdict(bool verdict) const;

  bool operator==(const GenerationRecord&) const = default;

 private:
  std::string problem_id_;
  StrategyId strategy_id_;
  int sample_index_;
  std::string completion_text_;
  std::vector<TokenStep> steps_;
  int completion_tokens_;
  FinishReason finish_reason_;
  std::optional<double> generation_entropy_;
  std::optional<bool> verdict_;
};

// Labeling thresholds: alpha and gamma are correctness cutoffs, beta is an
// entropy cutoff in nats. alpha >= gamma keeps the rule unambiguous.
class Thresholds {
 public:
  Thresholds(double alpha, double beta, double gamma);

  double alpha() const { return alpha_; }
  double beta() const { return beta_; }
  double gamma() const { return gamma_; }

  bool operator==(const Thresholds&) const = default;

 private:
  double alpha_;
  double beta_;
  double gamma_;
};

class StrategyConfig {
 public:
  StrategyConfig(StrategyId id, double temperature, std::optional<double> top_p,
                 double max_token_fraction, std::string prompt_prefix);

  StrategyId id() const { return id_; }
  double temperature() const { return temperature_; }
  std::optional<double> top_p() const { return top_p_; }
  double max_token_fraction() const { return max_token_fraction_; }
  const std::string& prompt_prefix() const { return prompt_prefix_; }

  bool operator==(const StrategyConfig&) const = default;

 private:
  StrategyId id_;
  double temperature_;
  std::optional<double> top_p_;
  double max_token_fraction_;
  std::string prompt_prefix_;
};

// The built-in Easy / Normal / Hard configurations.
const StrategyConfig& default_strategy(StrategyId id);

class FeatureVector {
 public:
  explicit FeatureVector(std::vector<double> values);

  std::size_t dim() const { return values_.size(); }
  std::span<const double> values() const { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }

  bool operator==(const FeatureVector&) const = default;

 private:
  std::vector<double> values_;
};

// Two-layer MLP weights. W1 is hidden_dim x input_dim and W2 is 3 x hidden_dim,
// both row-major.
class ProbeParameters {
 public:
  ProbeParameters(std::size_t input_dim, std::size_t hidden_dim, std::vector<double> w1,
                  std::vector<double> b1, std::vector<double> w2, std::vector<double> b2);

  static ProbeParameters zeros(std::size_t input_dim, std::size_t hidden_dim);
  // Flat layout: W1 | b1 | W2 | b2.
  static ProbeParameters from_flat(std::size_t input_dim, std::size_t hidden_dim,
                                   std::span<const double> flat);
  static std::size_t flat_size(std::size_t input_dim, std::size_t hidden_dim);

  std::size_t input_dim() const { return input_dim_; }
  std::size_t hidden_dim() const { return hidden_dim_; }
  const std::vector<double>& w1() const { return w1_; }
  const std::vector<double>& b1() const { return b1_; }
  const std::vector<double>& w2() const { return w2_; }
  const std::vector<double>& b2() const { return b2_; }

  std::vector<double> flatten() const;

  bool operator==(const ProbeParameters&) const = default;

 private:
  std::size_t input_dim_;
  std::size_t hidden_dim_;
  std::vector<double> w1_;
  std::vector<double> b1_;
  std::vector<double> w2_;
  std::vector<double> b2_;
};

class StrategyOutcome {
 public:
  StrategyOutcome(std::string problem_id, StrategyId strategy_id, bool correct, long tokens);

  const std::string& problem_id() const { return problem_id_; }
  StrategyId strategy_id() const { return strategy_id_; }
  bool correct() const { return correct_; }
  long tokens() const { return tokens_; }

  bool operator==(const StrategyOutcome&) const = default;

 private:
  std::string problem_id_;
  StrategyId strategy_id_;
  bool correct_;
  long tokens_;
};

struct Violation {
  enum class Kind { kDuplicateId, kMissingId, kMissingGold, kRatingOutOfRange, kMalformed };
  Kind kind;
  std::size_t index;  // position in the input
  std::string message;
};

// Report-only dataset checks. The Problem overload sees already-constructed
// problems, so it can only find duplicate ids and missing gold answers; the
// raw overload checks JSON objects before construction and also reports
// missing ids, out-of-range ratings and malformed fields.
std::vector<Violation> validate_dataset(std::span<const Problem> problems);
std::vector<Violation> validate_dataset_records(std::span<const std::string> json_lines);

}  // namespace diffadapt
