#include "diffadapt/core.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <unordered_map>

#include <json.hpp>

#include "diffadapt/json_io.hpp"

namespace diffadapt {
namespace {

bool all_finite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

}  // namespace

Difficulty difficulty_from_index(std::size_t index) {
  if (index >= kNumClasses) {
    throw ValidationError("difficulty class index out of range: " + std::to_string(index));
  }
  return static_cast<Difficulty>(index);
}

std::string_view to_string(Difficulty d) {
  switch (d) {
    case Difficulty::kEasy:
      return "Easy";
    case Difficulty::kNormal:
      return "Normal";
    case Difficulty::kHard:
      return "Hard";
  }
  return "Normal";
}

Difficulty parse_difficulty(std::string_view text) {
  const std::string t = lower(text);
  if (t == "easy") return Difficulty::kEasy;
  if (t == "normal") return Difficulty::kNormal;
  if (t == "hard") return Difficulty::kHard;
  throw ValidationError("unknown difficulty/strategy '" + std::string(text) + "'");
}

std::string_view to_string(FinishReason r) {
  switch (r) {
    case FinishReason::kStop:
      return "stop";
    case FinishReason::kLength:
      return "length";
    case FinishReason::kError:
      return "error";
  }
  return "error";
}

FinishReason parse_finish_reason(std::string_view text) {
  const std::string t = lower(text);
  if (t == "stop") return FinishReason::kStop;
  if (t == "length") return FinishReason::kLength;
  if (t == "error") return FinishReason::kError;
  throw ValidationError("unknown finish_reason '" + std::string(text) + "'");
}

Problem::Problem(std::string id, std::string question, std::string gold_answer,
                 std::optional<int> difficulty_rating, std::string benchmark, std::string split)
    : id_(std::move(id)),
      question_(std::move(question)),
      gold_answer_(std::move(gold_answer)),
      difficulty_rating_(difficulty_rating),
      benchmark_(std::move(benchmark)),
      split_(std::move(split)) {
  if (id_.empty()) throw ValidationError("problem id must be non-empty");
  if (difficulty_rating_ &&
      (*difficulty_rating_ < kMinRating || *difficulty_rating_ > kMaxRating)) {
    throw ValidationError("problem '" + id_ + "': difficulty_rating " +
                          std::to_string(*difficulty_rating_) + " outside [1, 10]");
  }
}

TokenStep::TokenStep(std::string token_text, double chosen_logprob,
                     std::vector<Alternative> alternatives, double entropy_nats)
    : token_text_(std::move(token_text)),
      chosen_logprob_(chosen_logprob),
      alternatives_(std::move(alternatives)),
      entropy_nats_(entropy_nats) {
  if (alternatives_.empty()) throw ValidationError("token step needs at least one alternative");
  if (!(chosen_logprob_ <= 0.0)) throw ValidationError("chosen logprob must be <= 0");
  for (std::size_t i = 0; i < alternatives_.size(); ++i) {
    const double lp = alternatives_[i].logprob;
    if (!(lp <= 0.0)) throw ValidationError("alternative logprobs must be <= 0");
    if (i > 0 && lp > alternatives_[i - 1].logprob) {
      throw ValidationError("alternatives must be sorted by descending logprob");
    }
  }
  const bool chosen_listed =
      std::any_of(alternatives_.begin(), alternatives_.end(),
                  [&](const Alternative& a) { return a.token == token_text_; });
  if (!chosen_listed) throw ValidationError("alternatives must include the chosen token");
  if (!std::isfinite(entropy_nats_) || entropy_nats_ < 0.0) {
    throw ValidationError("token entropy must be finite and >= 0");
  }
}

GenerationRecord::GenerationRecord(std::string problem_id, StrategyId strategy_id,
                                   int sample_index, std::string completion_text,
                                   std::vector<TokenStep> steps, int completion_tokens,
                                   FinishReason finish_reason,
                                   std::optional<double> generation_entropy,
                                   std::optional<bool> verdict)
    : problem_id_(std::move(problem_id)),
      strategy_id_(strategy_id),
      sample_index_(sample_index),
      completion_text_(std::move(completion_text)),
      steps_(std::move(steps)),
      completion_tokens_(completion_tokens),
      finish_reason_(finish_reason),
      generation_entropy_(generation_entropy),
      verdict_(verdict) {
  if (sample_index_ < 0) throw ValidationError("sample_index must be >= 0");
  if (completion_tokens_ < 0) throw ValidationError("completion_tokens must be >= 0");
  if (!steps_.empty()) {
    if (static_cast<std::size_t>(completion_tokens_) != steps_.size()) {
      throw ValidationError("completion_tokens (" + std::to_string(completion_tokens_) +
                            ") must equal the number of steps (" +
                            std::to_string(steps_.size()) + ")");
    }
    double sum = 0.0;
    for (const auto& s : steps_) sum += s.entropy_nats();
    const double mean = sum / static_cast<double>(steps_.size());
    if (generation_entropy_) {
      if (std::abs(*generation_entropy_ - mean) > 1e-12 * std::max(1.0, mean)) {
        throw ValidationError("generation_entropy disagrees with the mean step entropy");
      }
    }
    generation_entropy_ = mean;
  }
  if (generation_entropy_ &&
      (!std::isfinite(*generation_entropy_) || *generation_entropy_ < 0.0)) {
    throw ValidationError("generation_entropy must be finite and >= 0");
  }
}

GenerationRecord GenerationRecord::with_verdict(bool verdict) const {
  GenerationRecord copy = *this;
  copy.verdict_ = verdict;
  return copy;
}

Thresholds::Thresholds(double alpha, double beta, double gamma)
    : alpha_(alpha), beta_(beta), gamma_(gamma) {
  if (!(alpha_ > 0.0 && alpha_ <= 1.0)) throw ValidationError("alpha must lie in (0, 1]");
  if (!(beta_ > 0.0) || !std::isfinite(beta_)) throw ValidationError("beta must be positive");
  if (!(gamma_ >= 0.0 && gamma_ < 1.0)) throw ValidationError("gamma must lie in [0, 1)");
  if (alpha_ < gamma_) throw ValidationError("alpha must be >= gamma");
}

StrategyConfig::StrategyConfig(StrategyId id, double temperature, std::optional<double> top_p,
                               double max_token_fraction, std::string prompt_prefix)
    : id_(id),
      temperature_(temperature),
      top_p_(top_p),
      max_token_fraction_(max_token_fraction),
      prompt_prefix_(std::move(prompt_prefix)) {
  if (!(temperature_ > 0.0) || !std::isfinite(temperature_)) {
    throw ValidationError("temperature must be positive");
  }
  if (top_p_ && !(*top_p_ > 0.0 && *top_p_ <= 1.0)) {
    throw ValidationError("top_p must lie in (0, 1]");
  }
  if (!(max_token_fraction_ > 0.0 && max_token_fraction_ <= 1.0)) {
    throw ValidationError("max_token_fraction must lie in (0, 1]");
  }
}

const StrategyConfig& default_strategy(StrategyId id) {
  static const std::array<StrategyConfig, kNumClasses> kRegistry = {
      StrategyConfig(Difficulty::kEasy, 0.5, std::nullopt, 0.4,
                     "This looks straightforward. Let me solve it directly while "
                     "double-checking my approach."),
      StrategyConfig(Difficulty::kNormal, 0.8, 0.95, 1.0,
                     "I'll break this down into clear, logical steps and solve methodically."),
      StrategyConfig(Difficulty::kHard, 0.4, std::nullopt, 0.5,
                     "This appears intricate. I'll outline the main method while being "
                     "mindful of computational resources."),
  };
  return kRegistry[class_index(id)];
}

FeatureVector::FeatureVector(std::vector<double> values) : values_(std::move(values)) {
  if (values_.empty()) throw ValidationError("feature vector must have dim > 0");
  if (!all_finite(values_)) throw ValidationError("feature vector contains NaN/Inf");
}

ProbeParameters::ProbeParameters(std::size_t input_dim, std::size_t hidden_dim,
                                 std::vector<double> w1, std::vector<double> b1,
                                 std::vector<double> w2, std::vector<double> b2)
    : input_dim_(input_dim),
      hidden_dim_(hidden_dim),
      w1_(std::move(w1)),
      b1_(std::move(b1)),
      w2_(std::move(w2)),
      b2_(std::move(b2)) {
  if (input_dim_ == 0 || hidden_dim_ == 0) throw ValidationError("probe dims must be positive");
  if (w1_.size() != hidden_dim_ * input_dim_ || b1_.size() != hidden_dim_ ||
      w2_.size() != kNumClasses * hidden_dim_ || b2_.size() != kNumClasses) {
    throw ValidationError("probe parameter shapes are inconsistent");
  }
  if (!all_finite(w1_) || !all_finite(b1_) || !all_finite(w2_) || !all_finite(b2_)) {
    throw ValidationError("probe parameters contain NaN/Inf");
  }
}

ProbeParameters ProbeParameters::zeros(std::size_t input_dim, std::size_t hidden_dim) {
  return ProbeParameters(input_dim, hidden_dim, std::vector<double>(input_dim * hidden_dim),
                         std::vector<double>(hidden_dim),
                         std::vector<double>(kNumClasses * hidden_dim),
                         std::vector<double>(kNumClasses));
}

std::size_t ProbeParameters::flat_size(std::size_t input_dim, std::size_t hidden_dim) {
  return hidden_dim * input_dim + hidden_dim + kNumClasses * hidden_dim + kNumClasses;
}

ProbeParameters ProbeParameters::from_flat(std::size_t input_dim, std::size_t hidden_dim,
                                           std::span<const double> flat) {
  if (flat.size() != flat_size(input_dim, hidden_dim)) {
    throw ValidationError("flat probe vector has the wrong length");
  }
  auto take = [&flat](std::size_t& offset, std::size_t n) {
    std::vector<double> out(flat.begin() + static_cast<std::ptrdiff_t>(offset),
                            flat.begin() + static_cast<std::ptrdiff_t>(offset + n));
    offset += n;
    return out;
  };
  std::size_t offset = 0;
  auto w1 = take(offset, hidden_dim * input_dim);
  auto b1 = take(offset, hidden_dim);
  auto w2 = take(offset, kNumClasses * hidden_dim);
  auto b2 = take(offset, kNumClasses);
  return ProbeParameters(input_dim, hidden_dim, std::move(w1), std::move(b1), std::move(w2),
                         std::move(b2));
}

std::vector<double> ProbeParameters::flatten() const {
  std::vector<double> flat;
  flat.reserve(flat_size(input_dim_, hidden_dim_));
  flat.insert(flat.end(), w1_.begin(), w1_.end());
  flat.insert(flat.end(), b1_.begin(), b1_.end());
  flat.insert(flat.end(), w2_.begin(), w2_.end());
  flat.insert(flat.end(), b2_.begin(), b2_.end());
  return flat;
}

StrategyOutcome::StrategyOutcome(std::string problem_id, StrategyId strategy_id, bool correct,
                                 long tokens)
    : problem_id_(std::move(problem_id)),
      strategy_id_(strategy_id),
      correct_(correct),
      tokens_(tokens) {
  if (tokens_ < 0) throw ValidationError("outcome tokens must be >= 0");
}

std::vector<Violation> validate_dataset(std::span<const Problem> problems) {
  std::vector<Violation> report;
  std::unordered_map<std::string, std::size_t> first_seen;
  for (std::size_t i = 0; i < problems.size(); ++i) {
    const Problem& p = problems[i];
    auto [it, inserted] = first_seen.emplace(p.id(), i);
    if (!inserted) {
      report.push_back({Violation::Kind::kDuplicateId, i,
                        "duplicate id '" + p.id() + "' (first at " +
                            std::to_string(it->second) + ")"});
    }
    if (p.gold_answer().empty()) {
      report.push_back({Violation::Kind::kMissingGold, i, "problem '" + p.id() + "' has no gold answer"});
    }
  }
  return report;
}

std::vector<Violation> validate_dataset_records(std::span<const std::string> json_lines) {
  using nlohmann::json;
  std::vector<Violation> report;
  std::unordered_map<std::string, std::size_t> first_seen;
  for (std::size_t i = 0; i < json_lines.size(); ++i) {
    json j;
    try {
      j = json::parse(json_lines[i]);
    } catch (const json::exception& e) {
      report.push_back({Violation::Kind::kMalformed, i, std::string("unparseable JSON: ") + e.what()});
      continue;
    }
    if (!j.is_object()) {
      report.push_back({Violation::Kind::kMalformed, i, "record is not a JSON object"});
      continue;
    }
    const auto id_it = j.find("id");
    if (id_it == j.end() || !id_it->is_string() || id_it->get<std::string>().empty()) {
      report.push_back({Violation::Kind::kMissingId, i, "record has no non-empty string id"});
    } else {
      const std::string id = id_it->get<std::string>();
      auto [it, inserted] = first_seen.emplace(id, i);
      if (!inserted) {
        report.push_back({Violation::Kind::kDuplicateId, i,
                          "duplicate id '" + id + "' (first at " + std::to_string(it->second) + ")"});
      }
    }
    const auto gold = j.find("gold_answer");
    if (gold == j.end() || !gold->is_string() || gold->get<std::string>().empty()) {
      report.push_back({Violation::Kind::kMissingGold, i, "record has no gold_answer"});
    }
    const auto q = j.find("question");
    if (q == j.end() || !q->is_string()) {
      report.push_back({Violation::Kind::kMalformed, i, "record has no string question"});
    }
    const auto rating = j.find("difficulty_rating");
    if (rating != j.end() && !rating->is_null()) {
      if (!rating->is_number_integer()) {
        report.push_back({Violation::Kind::kMalformed, i, "difficulty_rating must be an integer"});
      } else {
        const auto r = rating->get<long long>();
        if (r < kMinRating || r > kMaxRating) {
          report.push_back({Violation::Kind::kRatingOutOfRange, i,
                            "difficulty_rating " + std::to_string(r) + " outside [1, 10]"});
        }
      }
    }
  }
  return report;
}

}  // namespace diffadapt

// --- JSON encodings -------------------------------------------------------

namespace nlohmann {

using diffadapt::Difficulty;

namespace {

template <typename T>
std::optional<T> optional_field(const json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<T>();
}

template <typename T>
void put_optional(json& j, const char* key, const std::optional<T>& v) {
  if (v) {
    j[key] = *v;
  } else {
    j[key] = nullptr;
  }
}

}  // namespace

Difficulty adl_serializer<Difficulty>::from_json(const json& j) {
  if (j.is_number_integer()) return diffadapt::difficulty_from_index(j.get<std::size_t>());
  return diffadapt::parse_difficulty(j.get<std::string>());
}

void adl_serializer<Difficulty>::to_json(json& j, Difficulty d) {
  j = std::string(diffadapt::to_string(d));
}

diffadapt::Problem adl_serializer<diffadapt::Problem>::from_json(const json& j) {
  return diffadapt::Problem(j.at("id").get<std::string>(), j.value("question", std::string{}),
                            j.value("gold_answer", std::string{}),
                            optional_field<int>(j, "difficulty_rating"),
                            j.value("benchmark", std::string{}), j.value("split", std::string{}));
}

void adl_serializer<diffadapt::Problem>::to_json(json& j, const diffadapt::Problem& p) {
  j = json{{"id", p.id()},
           {"question", p.question()},
           {"gold_answer", p.gold_answer()},
           {"benchmark", p.benchmark()},
           {"split", p.split()}};
  put_optional(j, "difficulty_rating", p.difficulty_rating());
}

diffadapt::Alternative adl_serializer<diffadapt::Alternative>::from_json(const json& j) {
  return diffadapt::Alternative{j.at("token").get<std::string>(), j.at("logprob").get<double>()};
}

void adl_serializer<diffadapt::Alternative>::to_json(json& j, const diffadapt::Alternative& a) {
  j = json{{"token", a.token}, {"logprob", a.logprob}};
}

diffadapt::TokenStep adl_serializer<diffadapt::TokenStep>::from_json(const json& j) {
  return diffadapt::TokenStep(j.at("token_text").get<std::string>(),
                              j.at("chosen_logprob").get<double>(),
                              j.at("alternatives").get<std::vector<diffadapt::Alternative>>(),
                              j.at("entropy_nats").get<double>());
}

void adl_serializer<diffadapt::TokenStep>::to_json(json& j, const diffadapt::TokenStep& s) {
  j = json{{"token_text", s.token_text()},
           {"chosen_logprob", s.chosen_logprob()},
           {"alternatives", s.alternatives()},
           {"entropy_nats", s.entropy_nats()}};
}

diffadapt::GenerationRecord adl_serializer<diffadapt::GenerationRecord>::from_json(const json& j) {
  std::vector<diffadapt::TokenStep> steps;
  if (const auto it = j.find("steps"); it != j.end() && !it->is_null()) {
    steps = it->get<std::vector<diffadapt::TokenStep>>();
  }
  return diffadapt::GenerationRecord(
      j.at("problem_id").get<std::string>(), j.at("strategy_id").get<Difficulty>(),
      j.value("sample_index", 0), j.value("completion_text", std::string{}), std::move(steps),
      j.at("completion_tokens").get<int>(),
      diffadapt::parse_finish_reason(j.value("finish_reason", std::string("stop"))),
      optional_field<double>(j, "generation_entropy"), optional_field<bool>(j, "verdict"));
}

void adl_serializer<diffadapt::GenerationRecord>::to_json(json& j,
                                                          const diffadapt::GenerationRecord& r) {
  j = json{{"problem_id", r.problem_id()},
           {"strategy_id", r.strategy_id()},
           {"sample_index", r.sample_index()},
           {"completion_text", r.completion_text()},
           {"steps", r.steps()},
           {"completion_tokens", r.completion_tokens()},
           {"finish_reason", std::string(diffadapt::to_string(r.finish_reason()))}};
  put_optional(j, "generation_entropy", r.generation_entropy());
  put_optional(j, "verdict", r.verdict());
}

diffadapt::Thresholds adl_serializer<diffadapt::Thresholds>::from_json(const json& j) {
  return diffadapt::Thresholds(j.at("alpha").get<double>(), j.at("beta").get<double>(),
                               j.at("gamma").get<double>());
}

void adl_serializer<diffadapt::Thresholds>::to_json(json& j, const diffadapt::Thresholds& t) {
  j = json{{"alpha", t.alpha()}, {"beta", t.beta()}, {"gamma", t.gamma()}};
}

diffadapt::StrategyConfig adl_serializer<diffadapt::StrategyConfig>::from_json(const json& j) {
  return diffadapt::StrategyConfig(j.at("id").get<Difficulty>(), j.at("temperature").get<double>(),
                                   optional_field<double>(j, "top_p"),
                                   j.at("max_token_fraction").get<double>(),
                                   j.value("prompt_prefix", std::string{}));
}

void adl_serializer<diffadapt::StrategyConfig>::to_json(json& j,
                                                        const diffadapt::StrategyConfig& s) {
  j = json{{"id", s.id()},
           {"temperature", s.temperature()},
           {"max_token_fraction", s.max_token_fraction()},
           {"prompt_prefix", s.prompt_prefix()}};
  put_optional(j, "top_p", s.top_p());
}

diffadapt::FeatureVector adl_serializer<diffadapt::FeatureVector>::from_json(const json& j) {
  auto values = j.is_array() ? j.get<std::vector<double>>() : j.at("values").get<std::vector<double>>();
  if (j.is_object() && j.contains("dim") && j.at("dim").get<std::size_t>() != values.size()) {
    throw diffadapt::ValidationError("feature dim field disagrees with values length");
  }
  return diffadapt::FeatureVector(std::move(values));
}

void adl_serializer<diffadapt::FeatureVector>::to_json(json& j, const diffadapt::FeatureVector& f) {
  j = json{{"dim", f.dim()},
           {"values", std::vector<double>(f.values().begin(), f.values().end())}};
}

diffadapt::ProbeParameters adl_serializer<diffadapt::ProbeParameters>::from_json(const json& j) {
  return diffadapt::ProbeParameters(
      j.at("input_dim").get<std::size_t>(), j.at("hidden_dim").get<std::size_t>(),
      j.at("w1").get<std::vector<double>>(), j.at("b1").get<std::vector<double>>(),
      j.at("w2").get<std::vector<double>>(), j.at("b2").get<std::vector<double>>());
}

void adl_serializer<diffadapt::ProbeParameters>::to_json(json& j,
                                                         const diffadapt::ProbeParameters& p) {
  j = json{{"input_dim", p.input_dim()}, {"hidden_dim", p.hidden_dim()},
           {"w1", p.w1()},               {"b1", p.b1()},
           {"w2", p.w2()},               {"b2", p.b2()}};
}

diffadapt::StrategyOutcome adl_serializer<diffadapt::StrategyOutcome>::from_json(const json& j) {
  return diffadapt::StrategyOutcome(j.at("problem_id").get<std::string>(),
                                    j.at("strategy_id").get<Difficulty>(),
                                    j.at("correct").get<bool>(), j.at("tokens").get<long>());
}

void adl_serializer<diffadapt::StrategyOutcome>::to_json(json& j,
                                                         const diffadapt::StrategyOutcome& o) {
  j = json{{"problem_id", o.problem_id()},
           {"strategy_id", o.strategy_id()},
           {"correct", o.correct()},
           {"tokens", o.tokens()}};
}

}  // namespace nlohmann
