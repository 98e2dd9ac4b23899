#include <gtest/gtest.h>

#include <cmath>

#include "diffadapt/io.hpp"
#include "diffadapt/simulator.hpp"
#include "diffadapt/verification.hpp"
#include "support/sim.hpp"
#include "support/testing.hpp"

using namespace diffadapt;
using testing_support::flat_rating;
using testing_support::make_profile;

namespace {

CompletionRequest request(StrategyId s, int max_tokens, int index = 0, int top_k = 20) {
  CompletionRequest r;
  r.strategy = s;
  r.max_tokens = max_tokens;
  r.sample_index = index;
  r.logprobs_top_k = top_k;
  return r;
}

}  // namespace

TEST(SimComplete, ClampRule) {
  auto profile = make_profile({{1, flat_rating(1.0, 0.3, 0.1, 10, {0.0})}});
  const Problem p("p", "q", "7", 1);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto r = sim_complete(*profile, p, request(StrategyId::kNormal, 5), seed);
    EXPECT_EQ(r.finish_reason(), FinishReason::kLength);
    EXPECT_EQ(r.completion_tokens(), 5);
    EXPECT_FALSE(verdict(r, p));
  }
}

TEST(SimComplete, ZeroAccuracyNeverCorrect) {
  auto profile = make_profile({{1, flat_rating(0.0, 0.3, 0.1, 10, {0.0})}});
  const Problem p("p", "q", "7", 1);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    EXPECT_FALSE(verdict(sim_complete(*profile, p, request(StrategyId::kEasy, 1000), seed), p));
  }
}

TEST(SimComplete, FullAccuracyAlwaysCorrectWhenNotTruncated) {
  auto profile = make_profile({{1, flat_rating(1.0, 0.3, 0.1, 10, {0.0})}});
  const Problem p("p", "q", "seven", 1);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto r = sim_complete(*profile, p, request(StrategyId::kEasy, 100000), seed);
    EXPECT_EQ(r.finish_reason(), FinishReason::kStop);
    EXPECT_TRUE(verdict(r, p));
  }
}

TEST(SimComplete, ZeroSpreadEntropyIsExact) {
  auto profile = make_profile({{5, flat_rating(0.5, 0.25, 0.0, 30, {0.0})}});
  const Problem p("p", "q", "1", 5);
  for (int j = 0; j < 10; ++j) {
    const auto r = sim_complete(*profile, p, request(StrategyId::kNormal, 1000, j), 3);
    ASSERT_TRUE(r.generation_entropy());
    EXPECT_EQ(*r.generation_entropy(), 0.25);
  }
}

TEST(SimComplete, DeterministicAndKeyed) {
  const auto& profile = SimProfile::builtin_default();
  const Problem p("p", "q", "1", 4);
  const auto a = sim_complete(profile, p, request(StrategyId::kNormal, 32768, 2), 11);
  EXPECT_EQ(a, sim_complete(profile, p, request(StrategyId::kNormal, 32768, 2), 11));
  EXPECT_NE(a, sim_complete(profile, p, request(StrategyId::kNormal, 32768, 3), 11));
  EXPECT_NE(a, sim_complete(profile, p, request(StrategyId::kNormal, 32768, 2), 12));
  EXPECT_EQ(a.strategy_id(), StrategyId::kNormal);
  EXPECT_EQ(a.sample_index(), 2);
}

TEST(SimComplete, StrategiesShareCorrectnessDraw) {
  // Normal is at least as accurate as Easy at every rating of the default
  // profile, so a problem Easy solves is also solved by Normal.
  const auto& profile = SimProfile::builtin_default();
  const auto problems = synthetic_problems(std::vector<int>(10, 30), 4);
  for (const auto& p : problems) {
    const auto e = sim_complete(profile, p, request(StrategyId::kEasy, 1 << 30), 4);
    const auto n = sim_complete(profile, p, request(StrategyId::kNormal, 1 << 30), 4);
    if (verdict(e, p)) EXPECT_TRUE(verdict(n, p)) << p.id();
  }
}

TEST(SimComplete, StepsMatchSummary) {
  const auto& profile = SimProfile::builtin_default();
  const Problem p("p", "q", "1", 2);
  SimOptions options;
  options.materialize_steps = true;
  const auto with_steps = sim_complete(profile, p, request(StrategyId::kHard, 32768), 1, options);
  const auto summary = sim_complete(profile, p, request(StrategyId::kHard, 32768), 1);
  ASSERT_TRUE(with_steps.has_steps());
  EXPECT_EQ(static_cast<int>(with_steps.steps().size()), with_steps.completion_tokens());
  EXPECT_EQ(with_steps.completion_tokens(), summary.completion_tokens());
  EXPECT_NEAR(*with_steps.generation_entropy(), *summary.generation_entropy(), 1e-9);
  const auto no_logprobs = sim_complete(profile, p, request(StrategyId::kHard, 32768, 0, 0), 1);
  EXPECT_FALSE(no_logprobs.generation_entropy());
}

TEST(SimComplete, Errors) {
  const auto& profile = SimProfile::builtin_default();
  EXPECT_THROW(sim_complete(profile, Problem("p", "q", "1"), request(StrategyId::kEasy, 10), 0), DomainError);
  auto small = make_profile({{1, flat_rating(1.0, 0.3, 0.1, 10, {0.0})}});
  EXPECT_THROW(sim_complete(*small, Problem("p", "q", "1", 2), request(StrategyId::kEasy, 10), 0), DomainError);
  EXPECT_THROW(sim_representation(*small, Problem("p", "q", "1", 2), 0), DomainError);
}

TEST(SimComplete, LengthMeanMatchesProfile) {
  auto profile = make_profile({{1, flat_rating(0.5, 0.3, 0.1, 400, {0.0})}});
  const Problem p("p", "q", "1", 1);
  double sum = 0.0;
  const int n = 4000;
  for (int j = 0; j < n; ++j) sum += sim_complete(*profile, p, request(StrategyId::kEasy, 1 << 30, j, 0), 1).completion_tokens();
  // Tail is geometric with mean 200 (sd about 200); allow 4 standard errors.
  EXPECT_NEAR(sum / n, 400.0, 4 * 200.0 / std::sqrt(static_cast<double>(n)));
}

TEST(SimRepresentation, CenterAndDeterminism) {
  auto exact = make_profile({{3, flat_rating(0.5, 0.3, 0.1, 10, {1.5, -2.0, 0.1}, 0.0)}});
  const Problem p("p", "q", "1", 3);
  const auto f = sim_representation(*exact, p, 1);
  EXPECT_EQ(f, FeatureVector({1.5, -2.0, static_cast<double>(0.1f)}));
  const auto& profile = SimProfile::builtin_default();
  EXPECT_EQ(sim_representation(profile, p, 5), sim_representation(profile, p, 5));
  EXPECT_NE(sim_representation(profile, p, 5), sim_representation(profile, p, 6));
  const auto g = sim_representation(profile, p, 5);
  for (double v : g.values()) EXPECT_EQ(v, static_cast<double>(static_cast<float>(v)));
}

TEST(SimProfile, ShippedFileMatchesBuiltin) {
  const auto loaded = SimProfile::load(std::filesystem::path(DIFFADAPT_SOURCE_DIR) / "config" / "sim_default_profile.json");
  EXPECT_EQ(loaded, SimProfile::builtin_default());
  EXPECT_EQ(SimProfile::from_json(SimProfile::builtin_default().to_json()), SimProfile::builtin_default());
  EXPECT_EQ(SimProfile::resolve("default"), SimProfile::builtin_default());
}

TEST(SimProfile, DefaultShape) {
  const auto& profile = SimProfile::builtin_default();
  ASSERT_EQ(profile.ratings().size(), 10u);
  const auto h = [&](int r) { return profile.at(r).mean_entropy; };
  const double reduction = 1.0 - (h(4) + h(5) + h(6)) / 3.0 / ((h(1) + h(2)) / 2.0);
  EXPECT_GE(reduction, 0.22);
  EXPECT_LE(reduction, 0.25);
  EXPECT_GT(h(8), h(5));
  for (int r = 2; r <= 10; ++r) {
    for (std::size_t s = 0; s < 3; ++s) EXPECT_LE(profile.at(r).accuracy[s], profile.at(r - 1).accuracy[s]);
  }
}

TEST(SimProfile, Validation) {
  auto bad = flat_rating(1.5, 0.3, 0.1, 10, {0.0});
  EXPECT_THROW(SimProfile({{1, bad}}), ValidationError);
  bad = flat_rating(0.5, 0.3, 0.1, 0.5, {0.0});
  EXPECT_THROW(SimProfile({{1, bad}}), ValidationError);
  EXPECT_THROW(SimProfile({{1, flat_rating(0.5, 0.3, 0.1, 10, {0.0})}, {2, flat_rating(0.5, 0.3, 0.1, 10, {0.0, 1.0})}}),
               ValidationError);
  EXPECT_THROW(SimProfile({}), ValidationError);
}

TEST(SyntheticProblems, IdsAndCounts) {
  const std::vector<int> counts{2, 0, 1};
  const auto ps = synthetic_problems(counts, 3, "x", "math", "eval");
  ASSERT_EQ(ps.size(), 3u);
  EXPECT_EQ(ps[0].id(), "x-r1-0");
  EXPECT_EQ(ps[2].id(), "x-r3-0");
  EXPECT_EQ(ps[2].difficulty_rating(), std::optional<int>(3));
  EXPECT_EQ(ps[0].benchmark(), "math");
  EXPECT_EQ(ps, synthetic_problems(counts, 3, "x", "math", "eval"));
  EXPECT_TRUE(validate_dataset(ps).empty());
}

TEST(AllocateCounts, LargestRemainder) {
  const std::vector<double> w{1, 1, 1};
  EXPECT_EQ(allocate_counts(w, 10), (std::vector<int>{4, 3, 3}));
  const std::vector<double> w2{0.5, 0.25, 0.25};
  EXPECT_EQ(allocate_counts(w2, 8), (std::vector<int>{4, 2, 2}));
  int total = 0;
  const std::vector<double> w3{3, 1, 4, 1, 5, 9, 2, 6, 5, 3};
  for (int c : allocate_counts(w3, 997)) total += c;
  EXPECT_EQ(total, 997);
}

TEST(SimBackend, SeedFromRequestOrBackend) {
  auto profile = std::make_shared<const SimProfile>(SimProfile::builtin_default());
  SimBackend a(profile, 1), b(profile, 2);
  const Problem p("p", "q", "1", 5);
  auto r = request(StrategyId::kNormal, 32768);
  EXPECT_NE(a.complete(p, r), b.complete(p, r));
  r.seed = 7;
  EXPECT_EQ(a.complete(p, r), b.complete(p, r));
  SimRepresentation ra(profile, 1);
  EXPECT_EQ(ra.represent(p), sim_representation(*profile, p, 1));
  EXPECT_NE(ra.fingerprint().find("/d16"), std::string::npos);
}
