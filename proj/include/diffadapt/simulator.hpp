#pragma once

// A deterministic synthetic model. Per difficulty rating it has an accuracy
// and a mean completion length for each strategy, a per-token entropy
// distribution, and a Gaussian cluster of "hidden states". Every draw comes
// from a counter stream keyed by (seed, problem id, strategy, sample index),
// so results do not depend on scheduling.

#include <array>
#include <filesystem>
#include <map>
#include <memory>
#include <vector>

#include <json.hpp>

#include "diffadapt/backend.hpp"
#include "diffadapt/core.hpp"

namespace diffadapt {

struct SimRatingProfile {
  std::array<double, kNumClasses> accuracy{};     // indexed by class_index(strategy)
  double mean_entropy = 0.0;                      // nats per token
  double entropy_spread = 0.0;                    // per-token standard deviation
  std::array<double, kNumClasses> mean_length{};  // expected completion tokens
  std::vector<double> feature_center;
  double feature_noise = 0.0;

  bool operator==(const SimRatingProfile&) const = default;
};

class SimProfile {
 public:
  // Validates probabilities in [0, 1], lengths >= 1, nonnegative entropy and
  // spread, positive noise and a common feature dimension.
  explicit SimProfile(std::map<int, SimRatingProfile> ratings);

  // The shipped profile: U-shaped entropy over ratings 1..10 with a ~24% dip
  // from ratings {1,2} to {4,5,6}, accuracy decreasing in rating.
  static const SimProfile& builtin_default();
  static SimProfile from_json(const nlohmann::json& j);
  static SimProfile load(const std::filesystem::path& path);
  // "default" or a path to a profile JSON.
  static SimProfile resolve(const std::string& spec);
  nlohmann::json to_json() const;

  // Throws DomainError for ratings outside the profile.
  const SimRatingProfile& at(int rating) const;
  const std::map<int, SimRatingProfile>& ratings() const { return ratings_; }
  std::size_t feature_dim() const { return feature_dim_; }
  std::string fingerprint() const;

  bool operator==(const SimProfile& other) const { return ratings_ == other.ratings_; }

 private:
  std::map<int, SimRatingProfile> ratings_;
  std::size_t feature_dim_ = 0;
};

struct SimOptions {
  // Emit one TokenStep per generated token. Off by default: records then
  // carry the generation entropy as a summary value, which keeps large runs
  // small.
  bool materialize_steps = false;
};

// One synthetic completion. Correctness uses a uniform keyed only by
// (seed, problem, sample) and compared against the strategy's accuracy, so
// strategies share randomness: a problem solved by a less accurate strategy
// is also solved by a more accurate one. Truncated completions carry no
// answer. Entropy is absent when request.logprobs_top_k == 0.
GenerationRecord sim_complete(const SimProfile& profile, const Problem& problem,
                              const CompletionRequest& request, std::uint64_t seed,
                              const SimOptions& options = {});

// feature_center(rating) + N(0, feature_noise^2) per coordinate, rounded to
// float32 (the precision features are stored at).
FeatureVector sim_representation(const SimProfile& profile, const Problem& problem,
                                 std::uint64_t seed);

class SimBackend final : public CompletionBackend {
 public:
  SimBackend(std::shared_ptr<const SimProfile> profile, std::uint64_t seed, SimOptions options = {});

  GenerationRecord complete(const Problem& problem, const CompletionRequest& request) override;
  std::string describe() const override;
  const SimProfile& profile() const { return *profile_; }

 private:
  std::shared_ptr<const SimProfile> profile_;
  std::uint64_t seed_;
  SimOptions options_;
};

class SimRepresentation final : public RepresentationProvider {
 public:
  SimRepresentation(std::shared_ptr<const SimProfile> profile, std::uint64_t seed);

  FeatureVector represent(const Problem& problem) override;
  std::string fingerprint() const override;

 private:
  std::shared_ptr<const SimProfile> profile_;
  std::uint64_t seed_;
};

// Synthetic problems: counts_per_rating[r-1] problems at rating r, ids
// "<prefix>-r<r>-<i>", integer gold answers derived from the seed.
std::vector<Problem> synthetic_problems(std::span<const int> counts_per_rating, std::uint64_t seed,
                                        const std::string& id_prefix = "sim",
                                        const std::string& benchmark = "sim",
                                        const std::string& split = "train");

// Splits `total` into integer counts proportional to `weights` (largest
// remainder, ties to the lower index).
std::vector<int> allocate_counts(std::span<const double> weights, int total);

}  // namespace diffadapt
