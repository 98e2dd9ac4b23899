#include "diffadapt/simulator.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "diffadapt/io.hpp"
#include "diffadapt/rng.hpp"

namespace diffadapt {

using nlohmann::json;

namespace {

// Draw-purpose tags for the counter streams.
constexpr std::uint64_t kTagCorrect = 0x636f7272656374ULL;
constexpr std::uint64_t kTagLength = 0x6c656e677468ULL;
constexpr std::uint64_t kTagEntropy = 0x656e74726f7079ULL;
constexpr std::uint64_t kTagFeature = 0x66656174757265ULL;
constexpr std::uint64_t kTagGold = 0x676f6c64ULL;

std::uint64_t stream_key(std::uint64_t seed, const std::string& problem_id, std::uint64_t tag,
                         std::uint64_t strategy, std::uint64_t sample_index) {
  std::uint64_t k = rng::mix(seed, io::fnv1a64(problem_id));
  k = rng::mix(k, tag);
  k = rng::mix(k, strategy);
  return rng::mix(k, sample_index);
}

// floor(mean / 2) fixed tokens plus a geometric tail on {1, 2, ...}; the
// total has the given mean and never falls below half of it.
int draw_length(rng::CounterStream& s, double mean) {
  if (mean <= 1.0) return 1;
  const double base = std::floor(mean / 2.0);
  const double tail_mean = mean - base;
  if (tail_mean <= 1.0) return static_cast<int>(base) + 1;
  const double p = 1.0 / tail_mean;
  const double u = s.open_uniform();
  double l = std::ceil(std::log(u) / std::log1p(-p));
  if (!(l >= 1.0)) l = 1.0;
  return static_cast<int>(std::min(base + l, 1e9));
}

// Nonnegative per-token entropy with the profile's mean and spread
// (log-normal matched on the first two moments).
class EntropySampler {
 public:
  EntropySampler(double mean, double spread) : mean_(mean) {
    degenerate_ = mean <= 0.0 || spread <= 0.0;
    if (!degenerate_) {
      const double var_log = std::log1p((spread * spread) / (mean * mean));
      sigma_ = std::sqrt(var_log);
      mu_ = std::log(mean) - 0.5 * var_log;
    }
  }
  double draw(rng::CounterStream& s) const {
    if (degenerate_) return std::max(0.0, mean_);
    return std::exp(mu_ + sigma_ * s.normal());
  }
  bool degenerate() const { return degenerate_; }
  double mean() const { return std::max(0.0, mean_); }

 private:
  double mean_;
  double mu_ = 0.0;
  double sigma_ = 0.0;
  bool degenerate_ = true;
};

std::string wrong_answer(const std::string& gold) {
  char* end = nullptr;
  const long long v = std::strtoll(gold.c_str(), &end, 10);
  if (!gold.empty() && end == gold.c_str() + gold.size()) return std::to_string(v + 1);
  return "not " + gold;
}

json strategy_map(const std::array<double, kNumClasses>& values) {
  json j = json::object();
  for (auto d : kAllDifficulties) {
    std::string key(to_string(d));
    key[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(key[0])));
    j[key] = values[class_index(d)];
  }
  return j;
}

std::array<double, kNumClasses> read_strategy_map(const json& j) {
  std::array<double, kNumClasses> out{};
  for (auto d : kAllDifficulties) {
    std::string key(to_string(d));
    key[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(key[0])));
    out[class_index(d)] = j.at(key).get<double>();
  }
  return out;
}

}  // namespace

SimProfile::SimProfile(std::map<int, SimRatingProfile> ratings) : ratings_(std::move(ratings)) {
  if (ratings_.empty()) throw ValidationError("simulator profile has no ratings");
  for (const auto& [rating, p] : ratings_) {
    const std::string where = "simulator profile rating " + std::to_string(rating) + ": ";
    for (double a : p.accuracy) {
      if (!(a >= 0.0 && a <= 1.0)) throw ValidationError(where + "accuracy outside [0, 1]");
    }
    for (double l : p.mean_length) {
      if (!(l >= 1.0) || !std::isfinite(l)) throw ValidationError(where + "mean length must be >= 1");
    }
    if (!(p.mean_entropy >= 0.0) || !std::isfinite(p.mean_entropy)) {
      throw ValidationError(where + "mean_entropy must be >= 0");
    }
    if (!(p.entropy_spread >= 0.0) || !std::isfinite(p.entropy_spread)) {
      throw ValidationError(where + "entropy_spread must be >= 0");
    }
    if (!(p.feature_noise >= 0.0) || !std::isfinite(p.feature_noise)) {
      throw ValidationError(where + "feature_noise must be >= 0");
    }
    if (p.feature_center.empty()) throw ValidationError(where + "feature_center is empty");
    if (feature_dim_ == 0) feature_dim_ = p.feature_center.size();
    if (p.feature_center.size() != feature_dim_) {
      throw ValidationError(where + "feature_center dimension differs from other ratings");
    }
  }
}

const SimProfile& SimProfile::builtin_default() {
  static const SimProfile kDefault = [] {
    struct Row {
      int rating;
      std::array<double, 3> acc;  // easy, normal, hard
      double entropy;
      std::array<double, 3> len;  // easy, normal, hard
    };
    // Entropy is high on ratings 1-2, lowest on 4-6 (a ~24% drop) and rises
    // again from 7 on; accuracy falls with rating. Easy keeps accuracy on
    // the low ratings with far fewer tokens and Hard keeps it on the high
    // ratings with about half the tokens.
    const Row rows[] = {
        {1, {0.96, 0.97, 0.95}, 0.445, {400, 900, 800}},
        {2, {0.95, 0.96, 0.94}, 0.445, {480, 1100, 950}},
        {3, {0.93, 0.94, 0.92}, 0.400, {650, 1500, 1300}},
        {4, {0.87, 0.93, 0.90}, 0.340, {1000, 2000, 1700}},
        {5, {0.83, 0.91, 0.88}, 0.335, {1300, 2600, 2200}},
        {6, {0.78, 0.89, 0.86}, 0.340, {1600, 3200, 2700}},
        {7, {0.30, 0.45, 0.44}, 0.420, {2200, 4500, 3000}},
        {8, {0.20, 0.33, 0.33}, 0.470, {2700, 5500, 3400}},
        {9, {0.12, 0.22, 0.22}, 0.510, {3000, 6500, 3800}},
        {10, {0.06, 0.12, 0.12}, 0.540, {3300, 7500, 4000}},
    };
    constexpr std::size_t kDim = 16;
    std::map<int, SimRatingProfile> ratings;
    for (const auto& row : rows) {
      SimRatingProfile p;
      p.accuracy = row.acc;
      p.mean_entropy = row.entropy;
      p.entropy_spread = 0.15;
      p.mean_length = row.len;
      // One axis per rating plus a weak shared difficulty direction.
      p.feature_center.assign(kDim, 0.0);
      p.feature_center[static_cast<std::size_t>(row.rating - 1)] = 4.0;
      for (std::size_t k = 10; k < kDim; ++k) p.feature_center[k] = 0.25 * row.rating;
      p.feature_noise = 0.35;
      ratings.emplace(row.rating, std::move(p));
    }
    return SimProfile(std::move(ratings));
  }();
  return kDefault;
}

SimProfile SimProfile::from_json(const json& j) {
  try {
    std::map<int, SimRatingProfile> ratings;
    for (const auto& [key, value] : j.at("ratings").items()) {
      SimRatingProfile p;
      p.accuracy = read_strategy_map(value.at("accuracy"));
      p.mean_entropy = value.at("mean_entropy").get<double>();
      p.entropy_spread = value.value("entropy_spread", 0.0);
      p.mean_length = read_strategy_map(value.at("mean_length"));
      p.feature_center = value.at("feature_center").get<std::vector<double>>();
      p.feature_noise = value.value("feature_noise", 0.0);
      ratings.emplace(std::stoi(key), std::move(p));
    }
    SimProfile profile(std::move(ratings));
    if (j.contains("feature_dim") && j["feature_dim"].get<std::size_t>() != profile.feature_dim()) {
      throw ValidationError("simulator profile feature_dim disagrees with feature_center lengths");
    }
    return profile;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed simulator profile: ") + e.what());
  }
}

SimProfile SimProfile::load(const std::filesystem::path& path) {
  try {
    return from_json(json::parse(io::read_file(path)));
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

SimProfile SimProfile::resolve(const std::string& spec) {
  if (spec.empty() || spec == "default") return builtin_default();
  return load(spec);
}

json SimProfile::to_json() const {
  json ratings = json::object();
  for (const auto& [rating, p] : ratings_) {
    ratings[std::to_string(rating)] = json{{"accuracy", strategy_map(p.accuracy)},
                                           {"mean_entropy", p.mean_entropy},
                                           {"entropy_spread", p.entropy_spread},
                                           {"mean_length", strategy_map(p.mean_length)},
                                           {"feature_center", p.feature_center},
                                           {"feature_noise", p.feature_noise}};
  }
  return json{{"feature_dim", feature_dim_}, {"ratings", std::move(ratings)}};
}

const SimRatingProfile& SimProfile::at(int rating) const {
  const auto it = ratings_.find(rating);
  if (it == ratings_.end()) {
    throw DomainError("simulator profile has no entry for rating " + std::to_string(rating));
  }
  return it->second;
}

std::string SimProfile::fingerprint() const { return io::fingerprint(to_json().dump()); }

GenerationRecord sim_complete(const SimProfile& profile, const Problem& problem,
                              const CompletionRequest& request, std::uint64_t seed,
                              const SimOptions& options) {
  if (!problem.difficulty_rating()) {
    throw DomainError("simulator needs a difficulty_rating (problem '" + problem.id() + "')");
  }
  if (request.max_tokens < 1) throw DomainError("simulator: max_tokens must be >= 1");
  const SimRatingProfile& p = profile.at(*problem.difficulty_rating());
  const std::size_t s = class_index(request.strategy);
  const auto index = static_cast<std::uint64_t>(request.sample_index);

  rng::CounterStream correct_stream(stream_key(seed, problem.id(), kTagCorrect, 0, index));
  rng::CounterStream length_stream(stream_key(seed, problem.id(), kTagLength, s, index));
  rng::CounterStream entropy_stream(stream_key(seed, problem.id(), kTagEntropy, s, index));

  const bool solved = correct_stream.uniform() < p.accuracy[s];
  const int natural_length = draw_length(length_stream, p.mean_length[s]);
  const bool truncated = natural_length > request.max_tokens;
  const int tokens = truncated ? request.max_tokens : natural_length;

  std::ostringstream text;
  text << "Synthetic reasoning trace for " << problem.id() << " (" << tokens << " tokens).";
  if (!truncated) {
    text << "\nThe final answer is \\boxed{"
         << (solved ? problem.gold_answer() : wrong_answer(problem.gold_answer())) << "}.";
  }

  std::vector<TokenStep> steps;
  std::optional<double> entropy;
  if (request.logprobs_top_k > 0) {
    const EntropySampler sampler(p.mean_entropy, p.entropy_spread);
    if (options.materialize_steps) {
      steps.reserve(static_cast<std::size_t>(tokens));
      for (int t = 0; t < tokens; ++t) {
        const double h = sampler.draw(entropy_stream);
        // The chosen token's logprob is not modelled; -h keeps it <= 0.
        steps.emplace_back("t", -h, std::vector<Alternative>{{"t", -h}}, h);
      }
    } else if (sampler.degenerate()) {
      entropy = sampler.mean();
    } else {
      double sum = 0.0;
      for (int t = 0; t < tokens; ++t) sum += sampler.draw(entropy_stream);
      entropy = sum / static_cast<double>(tokens);
    }
  }
  return GenerationRecord(problem.id(), request.strategy, request.sample_index, text.str(),
                          std::move(steps), tokens,
                          truncated ? FinishReason::kLength : FinishReason::kStop, entropy);
}

FeatureVector sim_representation(const SimProfile& profile, const Problem& problem,
                                 std::uint64_t seed) {
  if (!problem.difficulty_rating()) {
    throw DomainError("simulator needs a difficulty_rating (problem '" + problem.id() + "')");
  }
  const SimRatingProfile& p = profile.at(*problem.difficulty_rating());
  rng::CounterStream stream(stream_key(seed, problem.id(), kTagFeature, 0, 0));
  std::vector<double> values(p.feature_center.size());
  for (std::size_t k = 0; k < values.size(); ++k) {
    const double noise = p.feature_noise > 0.0 ? p.feature_noise * stream.normal() : 0.0;
    values[k] = static_cast<double>(static_cast<float>(p.feature_center[k] + noise));
  }
  return FeatureVector(std::move(values));
}

SimBackend::SimBackend(std::shared_ptr<const SimProfile> profile, std::uint64_t seed,
                       SimOptions options)
    : profile_(std::move(profile)), seed_(seed), options_(options) {}

GenerationRecord SimBackend::complete(const Problem& problem, const CompletionRequest& request) {
  return sim_complete(*profile_, problem, request, request.seed.value_or(seed_), options_);
}

std::string SimBackend::describe() const { return "sim:" + profile_->fingerprint(); }

SimRepresentation::SimRepresentation(std::shared_ptr<const SimProfile> profile, std::uint64_t seed)
    : profile_(std::move(profile)), seed_(seed) {}

FeatureVector SimRepresentation::represent(const Problem& problem) {
  return sim_representation(*profile_, problem, seed_);
}

std::string SimRepresentation::fingerprint() const {
  return "sim:" + profile_->fingerprint() + "/d" + std::to_string(profile_->feature_dim());
}

std::vector<Problem> synthetic_problems(std::span<const int> counts_per_rating, std::uint64_t seed,
                                        const std::string& id_prefix, const std::string& benchmark,
                                        const std::string& split) {
  std::vector<Problem> out;
  for (std::size_t r = 0; r < counts_per_rating.size(); ++r) {
    const int rating = static_cast<int>(r) + 1;
    for (int i = 0; i < counts_per_rating[r]; ++i) {
      std::string id = id_prefix + "-r" + std::to_string(rating) + "-" + std::to_string(i);
      rng::CounterStream gold(stream_key(seed, id, kTagGold, 0, 0));
      std::string question = "Synthetic problem " + id + " at difficulty " +
                             std::to_string(rating) + ": report the hidden value.";
      out.emplace_back(std::move(id), std::move(question), std::to_string(gold.below(1000)),
                       rating, benchmark, split);
    }
  }
  return out;
}

std::vector<int> allocate_counts(std::span<const double> weights, int total) {
  if (weights.empty()) return {};
  double sum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ValidationError("weights must be finite and >= 0");
    sum += w;
  }
  if (!(sum > 0.0)) throw ValidationError("weights must not all be zero");
  std::vector<int> counts(weights.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  int assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double exact = total * weights[i] / sum;
    counts[i] = static_cast<int>(std::floor(exact));
    assigned += counts[i];
    remainders.emplace_back(exact - counts[i], i);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; assigned < total; ++k, ++assigned) {
    ++counts[remainders[k % remainders.size()].second];
  }
  return counts;
}

}  // namespace diffadapt
