#include <gtest/gtest.h>

#include <thread>

#include "diffadapt/backend.hpp"
#include "diffadapt/simulator.hpp"
#include "diffadapt/strategy.hpp"
#include "support/sim.hpp"
#include "support/testing.hpp"

using namespace diffadapt;

namespace {

const char* kEasyPrefix = "This looks straightforward. Let me solve it directly while double-checking my approach.";
const char* kNormalPrefix = "I'll break this down into clear, logical steps and solve methodically.";
const char* kHardPrefix =
    "This appears intricate. I'll outline the main method while being mindful of computational resources.";

// A probe whose output ignores the input and always favours `label`.
std::shared_ptr<const ProbeParameters> hardwired(std::size_t dim, Difficulty label) {
  auto flat = ProbeParameters::zeros(dim, 2).flatten();
  flat[flat.size() - 3 + class_index(label)] = 20.0;
  return std::make_shared<const ProbeParameters>(ProbeParameters::from_flat(dim, 2, flat));
}

// Records every request it receives.
class RecordingBackend final : public CompletionBackend {
 public:
  explicit RecordingBackend(std::shared_ptr<CompletionBackend> inner, bool fail = false)
      : inner_(std::move(inner)), fail_(fail) {}
  GenerationRecord complete(const Problem& p, const CompletionRequest& r) override {
    requests.push_back(r);
    if (fail_) throw BackendError("upstream down");
    return inner_->complete(p, r);
  }
  std::string describe() const override { return "recording"; }
  std::vector<CompletionRequest> requests;

 private:
  std::shared_ptr<CompletionBackend> inner_;
  bool fail_;
};

}  // namespace

TEST(ResolveStrategy, Examples) {
  const auto easy = resolve_strategy(StrategyId::kEasy, 1000);
  EXPECT_EQ(easy.max_tokens, 400);
  EXPECT_EQ(easy.temperature, 0.5);
  EXPECT_FALSE(easy.top_p);
  EXPECT_TRUE(easy.close_reasoning_block);
  EXPECT_EQ(easy.prompt_prefix, kEasyPrefix);

  const auto normal = resolve_strategy(StrategyId::kNormal, 1000);
  EXPECT_EQ(normal.max_tokens, 1000);
  EXPECT_EQ(normal.temperature, 0.8);
  EXPECT_EQ(normal.top_p, std::optional<double>(0.95));
  EXPECT_FALSE(normal.close_reasoning_block);
  EXPECT_EQ(normal.prompt_prefix, kNormalPrefix);

  const auto hard = resolve_strategy(StrategyId::kHard, 2);
  EXPECT_EQ(hard.max_tokens, 1);
  EXPECT_EQ(hard.temperature, 0.4);
  EXPECT_FALSE(hard.floored);
  EXPECT_EQ(hard.prompt_prefix, kHardPrefix);

  const auto floored = resolve_strategy(StrategyId::kHard, 1);
  EXPECT_EQ(floored.max_tokens, 1);
  EXPECT_TRUE(floored.floored);
  EXPECT_THROW(resolve_strategy(StrategyId::kEasy, 0), DomainError);
}

TEST(ResolveStrategy, FloorAndScale) {
  EXPECT_EQ(resolve_strategy(StrategyId::kEasy, 1001).max_tokens, 400);
  EXPECT_EQ(resolve_strategy(StrategyId::kHard, 1001).max_tokens, 500);
  EXPECT_EQ(resolve_strategy(StrategyId::kEasy, 18000).max_tokens, 7200);
  const auto scaled = resolve_strategy(StrategyId::kNormal, 18000, 0.5);
  EXPECT_EQ(scaled.base_max_tokens, 9000);
  EXPECT_EQ(scaled.max_tokens, 9000);
  EXPECT_EQ(resolve_strategy(StrategyId::kEasy, 18000, 0.25).max_tokens, 1800);
  EXPECT_THROW(resolve_strategy(StrategyId::kEasy, 1000, 0.0), DomainError);
}

TEST(ResolveStrategy, RequestAndPrefill) {
  const auto easy = resolve_strategy(StrategyId::kEasy, 100);
  const auto req = easy.to_request(5, 42, 3);
  EXPECT_EQ(req.max_tokens, 40);
  EXPECT_EQ(req.strategy, StrategyId::kEasy);
  EXPECT_EQ(req.sample_index, 3);
  EXPECT_EQ(req.seed, std::optional<std::uint64_t>(42));
  EXPECT_EQ(req.logprobs_top_k, 5);
  EXPECT_EQ(render_assistant_prefill(req.prompt_prefix, req.close_reasoning_block, true),
            std::string("<think>\n") + kEasyPrefix + "\n</think>\n");
  EXPECT_EQ(render_assistant_prefill(kHardPrefix, false, true), std::string("<think>\n") + kHardPrefix + "\n");
  EXPECT_EQ(render_assistant_prefill(kNormalPrefix, false, false), std::string(kNormalPrefix) + "\n");
  EXPECT_EQ(render_assistant_prefill("", false, true), "");
}

TEST(BudgetTable, BuiltinValues) {
  const auto& t = BudgetTable::builtin();
  EXPECT_EQ(t.size(), 40u);
  EXPECT_EQ(t.lookup("Qwen3-4B", "GSM8K"), 1500);
  EXPECT_EQ(t.lookup("Qwen/Qwen3-4B", "AIME 2024"), 18000);
  EXPECT_EQ(t.lookup("deepseek-ai/DeepSeek-R1-Distill-Qwen-7B", "MATH-500"), 3000);
  EXPECT_EQ(t.lookup("DeepSeek-R1-Llama-8B", "MMLU-Pro"), 1750);
  EXPECT_EQ(t.lookup("Nemotron-1.5B", "aime25"), 6000);
  EXPECT_EQ(t.lookup("ThinkPrune-7B", "GPQA-Diamond"), 4500);
  EXPECT_EQ(t.lookup("unknown", "gsm8k"), 32768);
  EXPECT_EQ(t.lookup("Qwen3-4B", "unknown"), 32768);
}

TEST(BudgetTable, JsonRoundTripAndErrors) {
  const auto j = BudgetTable::builtin().to_json();
  const auto t = BudgetTable::from_json(j);
  EXPECT_EQ(t.to_json(), j);
  EXPECT_THROW(BudgetTable::from_json({{"budget", 1}}), ValidationError);
  EXPECT_THROW(BudgetTable::from_json({{"budgets", {{"m", {{"b", 0}}}}}}), ValidationError);
  EXPECT_THROW(BudgetTable::from_json({{"budgets", {{"m", {{"b", "x"}}}}}}), ValidationError);
  const auto custom = BudgetTable::from_json({{"default_max_tokens", 100}, {"budgets", {{"m", {{"b", 7}}}}}});
  EXPECT_EQ(custom.lookup("m", "b"), 7);
  EXPECT_EQ(custom.lookup("m", "c"), 100);
}

class RouterTest : public ::testing::Test {
 protected:
  std::shared_ptr<const SimProfile> profile =
      std::make_shared<const SimProfile>(SimProfile::builtin_default());
  std::shared_ptr<SimBackend> sim = std::make_shared<SimBackend>(profile, 1);
  std::shared_ptr<SimRepresentation> repr = std::make_shared<SimRepresentation>(profile, 1);
  std::shared_ptr<const BudgetTable> budgets = std::make_shared<const BudgetTable>(BudgetTable::builtin());
  Problem problem{"p", "q", "5", 3, "gsm8k", "eval"};
};

TEST_F(RouterTest, HardwiredEasyProbe) {
  auto rec = std::make_shared<RecordingBackend>(sim);
  Router router(hardwired(profile->feature_dim(), Difficulty::kEasy), rec, repr, budgets,
                RouterOptions{"Qwen3-4B", 1.0, 20, 1});
  const auto r = router.route(problem);
  ASSERT_TRUE(r.ok());
  EXPECT_FALSE(r.fallback);
  EXPECT_EQ(r.label, Difficulty::kEasy);
  ASSERT_EQ(rec->requests.size(), 1u);
  EXPECT_EQ(rec->requests[0].max_tokens, 600);  // 0.4 * 1500
  EXPECT_EQ(rec->requests[0].prompt_prefix, kEasyPrefix);
  EXPECT_TRUE(rec->requests[0].close_reasoning_block);
  EXPECT_LE(r.record->completion_tokens(), 600);
  EXPECT_TRUE(r.record->verdict().has_value());
  ASSERT_TRUE(r.probabilities);
  EXPECT_GT((*r.probabilities)[0], 0.99);
}

TEST_F(RouterTest, DisabledProviderFallsBackToNormal) {
  Router router(hardwired(profile->feature_dim(), Difficulty::kEasy), sim,
                std::make_shared<DisabledProvider>(), budgets, RouterOptions{"Qwen3-4B", 1.0, 20, 1});
  const auto r = router.route(problem);
  EXPECT_TRUE(r.ok());
  EXPECT_TRUE(r.fallback);
  EXPECT_EQ(r.label, Difficulty::kNormal);
  EXPECT_EQ(r.params.max_tokens, 1500);
  EXPECT_FALSE(r.probabilities);
  EXPECT_FALSE(r.fallback_reason.empty());
}

TEST_F(RouterTest, DimensionMismatchFallsBack) {
  Router router(hardwired(5, Difficulty::kHard), sim, repr, budgets, RouterOptions{"", 1.0, 20, 1});
  const auto r = router.route(problem);
  EXPECT_TRUE(r.fallback);
  EXPECT_EQ(r.label, Difficulty::kNormal);
  EXPECT_THROW(router.classify(FeatureVector({1.0})), DomainError);
}

TEST_F(RouterTest, CompletionFailureIsReported) {
  auto failing = std::make_shared<RecordingBackend>(sim, true);
  Router router(hardwired(profile->feature_dim(), Difficulty::kHard), failing, repr, budgets,
                RouterOptions{"", 1.0, 20, 1});
  const auto r = router.route(problem);
  EXPECT_FALSE(r.ok());
  EXPECT_EQ(r.label, Difficulty::kHard);
  EXPECT_NE(r.error->find("upstream down"), std::string::npos);
  EXPECT_FALSE(r.record);
}

TEST_F(RouterTest, ModelOverrideAndBudgetScale) {
  auto rec = std::make_shared<RecordingBackend>(sim);
  Router router(hardwired(profile->feature_dim(), Difficulty::kHard), rec, repr, budgets,
                RouterOptions{"Qwen3-4B", 0.5, 20, 1});
  router.route(problem, 0, std::string("DeepSeek-R1-Distill-Qwen-7B"));
  ASSERT_EQ(rec->requests.size(), 1u);
  EXPECT_EQ(rec->requests[0].max_tokens, 125);  // 0.5 * (0.5 * 500)
}

TEST_F(RouterTest, ConcurrentIdenticalRequests) {
  Router router(hardwired(profile->feature_dim(), Difficulty::kEasy), sim, repr, budgets,
                RouterOptions{"", 1.0, 20, 1});
  std::vector<RoutedResult> results(8);
  {
    std::vector<std::jthread> threads;
    for (std::size_t i = 0; i < results.size(); ++i) {
      threads.emplace_back([&, i] { results[i] = router.route(problem); });
    }
  }
  for (const auto& r : results) {
    EXPECT_EQ(r.label, results[0].label);
    EXPECT_EQ(*r.record, *results[0].record);
  }
}

TEST_F(RouterTest, OracleAccurateProbeSavesTokens) {
  // Closed form: with every problem routed to its cheapest adequate strategy
  // the expected length is below Normal's at every rating.
  for (const auto& [rating, p] : profile->ratings()) {
    EXPECT_LT(std::min(p.mean_length[0], p.mean_length[2]), p.mean_length[1]) << rating;
  }
  std::vector<int> counts(10, 20);
  const auto problems = synthetic_problems(counts, 4, "route", "sim", "eval");
  auto label_of = [](int rating) { return rating <= 3 ? Difficulty::kEasy : rating <= 6 ? Difficulty::kNormal : Difficulty::kHard; };
  double routed = 0.0, normal = 0.0;
  for (const auto& pr : problems) {
    const auto label = label_of(*pr.difficulty_rating());
    Router router(hardwired(profile->feature_dim(), label), sim, repr, budgets, RouterOptions{"", 1.0, 0, 1});
    Router baseline(hardwired(profile->feature_dim(), Difficulty::kNormal), sim, repr, budgets,
                    RouterOptions{"", 1.0, 0, 1});
    routed += router.route(pr).record->completion_tokens();
    normal += baseline.route(pr).record->completion_tokens();
  }
  EXPECT_LT(routed, normal);
}
