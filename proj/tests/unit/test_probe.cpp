#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "diffadapt/io.hpp"
#include "diffadapt/probe.hpp"
#include "diffadapt/rng.hpp"
#include "support/testing.hpp"

using namespace diffadapt;

namespace {

struct Batch {
  std::vector<TrainingExample> examples;
  std::vector<std::vector<double>> xs;
  std::vector<int> ys;
};

Batch random_batch(std::size_t d, std::size_t n, std::uint64_t seed) {
  rng::CounterStream s(seed);
  Batch b;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> x(d);
    for (auto& v : x) v = s.normal();
    const int y = static_cast<int>(s.below(3));
    b.examples.push_back({FeatureVector(x), difficulty_from_index(static_cast<std::size_t>(y))});
    b.xs.push_back(x);
    b.ys.push_back(y);
  }
  return b;
}

ProbeParameters random_params(std::size_t d, std::size_t h, std::uint64_t seed) {
  rng::CounterStream s(seed ^ 0x55);
  std::vector<double> flat(ProbeParameters::flat_size(d, h));
  for (auto& v : flat) v = 0.5 * s.normal();
  return ProbeParameters::from_flat(d, h, flat);
}

// Three Gaussian clusters on orthogonal axes.
std::vector<TrainingExample> clusters(std::size_t d, std::size_t per_class, double sigma, double sep,
                                      std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> noise(0.0, sigma);
  std::vector<TrainingExample> out;
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < per_class; ++i) {
      std::vector<double> x(d);
      for (auto& v : x) v = noise(gen);
      x[c] += sep;
      out.push_back({FeatureVector(x), difficulty_from_index(c)});
    }
  }
  return out;
}

}  // namespace

TEST(Forward, ZeroParamsUniform) {
  const auto p = ProbeParameters::zeros(5, 4);
  const auto d = forward(p, FeatureVector({1, -2, 3, 0.5, 9}));
  for (double v : d) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(Forward, MatchesSoftmaxOracle) {
  auto flat = ProbeParameters::zeros(2, 2).flatten();
  flat[flat.size() - 3] = 10.0;
  const auto p = ProbeParameters::from_flat(2, 2, flat);
  const auto d = forward(p, FeatureVector({0.3, 0.7}));
  const auto ref = testing_support::reference_softmax({10.0L, 0.0L, 0.0L});
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(d[static_cast<std::size_t>(i)], static_cast<double>(ref[static_cast<std::size_t>(i)]), 1e-15);
  EXPECT_NEAR(d[0], 0.99990, 1e-5);
  EXPECT_NEAR(d[1], 0.0000454, 1e-7);
}

TEST(Forward, ShiftInvariantAndNormalised) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto p = random_params(6, 5, seed);
    const auto b = random_batch(6, 4, seed);
    for (const auto& ex : b.examples) {
      const auto z = logits(p, ex.feature);
      const auto d = forward(p, ex.feature);
      EXPECT_NEAR(d[0] + d[1] + d[2], 1.0, 1e-12);
      for (double v : d) EXPECT_GT(v, 0.0);
      const ClassScores shifted{z[0] + 123.0, z[1] + 123.0, z[2] + 123.0};
      const auto d2 = softmax(shifted);
      for (int i = 0; i < 3; ++i) EXPECT_NEAR(d[static_cast<std::size_t>(i)], d2[static_cast<std::size_t>(i)], 1e-12);
      EXPECT_EQ(argmax_label(z), argmax_label(shifted));
    }
  }
  // exp(-2000) underflows; the result must still be a finite distribution.
  const auto extreme = softmax({1000.0, -1000.0, 0.0});
  EXPECT_GE(extreme[1], 0.0);
  EXPECT_EQ(extreme[0], 1.0);
}

TEST(Forward, DimensionMismatch) {
  const auto p = ProbeParameters::zeros(3, 2);
  EXPECT_THROW(forward(p, FeatureVector({1, 2})), DomainError);
  EXPECT_THROW(predict(p, FeatureVector({1, 2, 3, 4})), DomainError);
}

TEST(Loss, Examples) {
  const auto zero = ProbeParameters::zeros(4, 3);
  const auto b = random_batch(4, 7, 1);
  EXPECT_NEAR(loss(zero, b.examples), std::log(3.0), 1e-15);

  auto flat = ProbeParameters::zeros(1, 1).flatten();
  // b2 = (0, 28.3, 0): true-class probability about 1 - 1e-12.
  flat[flat.size() - 2] = std::log(2.0 / 1e-12);
  const auto sharp = ProbeParameters::from_flat(1, 1, flat);
  const std::vector<TrainingExample> one{{FeatureVector({1.0}), Difficulty::kNormal}};
  EXPECT_NEAR(loss(sharp, one), 1e-12, 1e-15);

  const auto p = random_params(4, 3, 2);
  const std::vector<TrainingExample> a{b.examples[0]}, c{b.examples[1]};
  const std::vector<TrainingExample> both{b.examples[0], b.examples[1]};
  EXPECT_NEAR(loss(p, both), (loss(p, a) + loss(p, c)) / 2.0, 1e-14);
  EXPECT_THROW(loss(p, std::vector<TrainingExample>{}), DomainError);
}

TEST(Loss, MatchesIndependentComputation) {
  const auto p = random_params(8, 6, 4);
  const auto b = random_batch(8, 10, 4);
  const auto flat = p.flatten();
  const std::vector<long double> t(flat.begin(), flat.end());
  EXPECT_NEAR(loss(p, b.examples), static_cast<double>(testing_support::reference_loss(8, 6, t, b.xs, b.ys)),
              1e-12);
}

TEST(Gradient, FiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto p = random_params(16, 8, seed);
    const auto b = random_batch(16, 8, seed + 100);
    const auto g = gradient(p, b.examples).flatten();
    EXPECT_LT(testing_support::max_gradient_error(16, 8, p.flatten(), g, b.xs, b.ys), 1e-4) << seed;
  }
}

TEST(Gradient, VanishesAtConstructedOptimum) {
  auto flat = ProbeParameters::zeros(2, 2).flatten();
  flat[flat.size() - 3] = 40.0;  // strongly favour Easy
  const auto p = ProbeParameters::from_flat(2, 2, flat);
  const std::vector<TrainingExample> one{{FeatureVector({0.5, -0.5}), Difficulty::kEasy}};
  const auto g = gradient(p, one);
  double norm = 0.0;
  for (double v : g.b2()) norm += v * v;
  EXPECT_LT(std::sqrt(norm), 1e-6);
}

TEST(Gradient, DuplicatedBatchUnchanged) {
  const auto p = random_params(5, 4, 9);
  const auto b = random_batch(5, 6, 9);
  auto doubled = b.examples;
  doubled.insert(doubled.end(), b.examples.begin(), b.examples.end());
  const auto g1 = gradient(p, b.examples).flatten();
  const auto g2 = gradient(p, doubled).flatten();
  for (std::size_t i = 0; i < g1.size(); ++i) EXPECT_NEAR(g1[i], g2[i], 1e-14);
}

TEST(Gradient, ReluSubgradientAtZero) {
  // Zero W1 and b1 put every hidden unit exactly at 0: W1 and b1 get no gradient.
  auto flat = ProbeParameters::zeros(3, 2).flatten();
  for (std::size_t i = 3 * 2 + 2; i < flat.size(); ++i) flat[i] = 0.3;
  const auto p = ProbeParameters::from_flat(3, 2, flat);
  const std::vector<TrainingExample> one{{FeatureVector({1, 2, 3}), Difficulty::kHard}};
  const auto g = gradient(p, one);
  for (double v : g.w1()) EXPECT_EQ(v, 0.0);
  for (double v : g.b1()) EXPECT_EQ(v, 0.0);
}

TEST(Gradient, PlainDescentDecreasesLoss) {
  int monotone = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto flat = random_params(6, 5, seed).flatten();
    const auto b = random_batch(6, 12, seed + 7);
    double prev = loss(ProbeParameters::from_flat(6, 5, flat), b.examples);
    bool ok = true;
    for (int step = 0; step < 10; ++step) {
      const auto g = gradient(ProbeParameters::from_flat(6, 5, flat), b.examples).flatten();
      for (std::size_t i = 0; i < flat.size(); ++i) flat[i] -= 1e-3 * g[i];
      const double cur = loss(ProbeParameters::from_flat(6, 5, flat), b.examples);
      if (cur > prev) ok = false;
      prev = cur;
    }
    monotone += ok ? 1 : 0;
  }
  EXPECT_GE(monotone, 19);
}

TEST(Initialize, ScaledUniformZeroBias) {
  const auto p = initialize(64, 32, 3);
  for (double v : p.w1()) EXPECT_LE(std::fabs(v), 1.0 / 8.0);
  for (double v : p.w2()) EXPECT_LE(std::fabs(v), 1.0 / std::sqrt(32.0));
  for (double v : p.b1()) EXPECT_EQ(v, 0.0);
  for (double v : p.b2()) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(initialize(64, 32, 3), p);
  EXPECT_NE(initialize(64, 32, 4), p);
}

TEST(Train, SeparableClustersAndDeterminism) {
  const auto data = clusters(16, 60, 0.1, 3.0, 2);
  TrainConfig config;
  config.hidden_dim = 32;
  config.seed = 17;
  const auto a = train(data, config);
  const auto b = train(data, config);
  EXPECT_GE(a.train_accuracy, 0.95);
  EXPECT_LT(a.final_loss, a.initial_loss);
  EXPECT_EQ(a.epoch_loss.size(), 100u);
  EXPECT_EQ(io::fingerprint(encode_probe(a.params, "")), io::fingerprint(encode_probe(b.params, "")));
  EXPECT_EQ(a.params, b.params);
}

TEST(Train, NoSignalStaysNearChance) {
  std::vector<TrainingExample> data;
  for (int i = 0; i < 300; ++i) data.push_back({FeatureVector({1.0, 2.0, 3.0}), difficulty_from_index(static_cast<std::size_t>(i % 3))});
  TrainConfig config;
  config.hidden_dim = 8;
  const auto r = train(data, config);
  EXPECT_NEAR(r.train_accuracy, 1.0 / 3.0, 0.05);
}

TEST(Train, WarnsOnMissingClassAndAbortsOnNaN) {
  std::vector<TrainingExample> two;
  for (int i = 0; i < 10; ++i) two.push_back({FeatureVector({static_cast<double>(i % 2)}), i % 2 ? Difficulty::kEasy : Difficulty::kHard});
  TrainConfig config;
  config.epochs = 2;
  config.hidden_dim = 4;
  const auto r = train(two, config);
  ASSERT_FALSE(r.warnings.empty());
  EXPECT_NE(r.warnings[0].find("Normal"), std::string::npos) << r.warnings[0];

  // A step size of 1e300 overflows the logits on the second update.
  TrainConfig wild = config;
  wild.learning_rate = 1e300;
  std::vector<TrainingExample> data{{FeatureVector(std::vector<double>(16, 1.0)), Difficulty::kEasy},
                                    {FeatureVector(std::vector<double>(16, -1.0)), Difficulty::kHard}};
  try {
    train(data, wild);
    FAIL() << "expected DomainError";
  } catch (const DomainError& e) {
    EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos) << e.what();
  }
  EXPECT_THROW(train(std::vector<TrainingExample>{}, config), DomainError);
  config.epochs = 0;
  EXPECT_THROW(train(two, config), ValidationError);
}

TEST(Train, EpochCallback) {
  const auto data = clusters(4, 10, 0.1, 3.0, 1);
  TrainConfig config;
  config.epochs = 3;
  config.hidden_dim = 4;
  std::vector<int> seen;
  const auto r = train(data, config, [&](int epoch, double l) {
    seen.push_back(epoch);
    EXPECT_TRUE(std::isfinite(l));
  });
  EXPECT_EQ(seen.size(), 3u);
  EXPECT_EQ(r.epoch_loss.size(), 3u);
}

TEST(Predict, ArgmaxAndTies) {
  EXPECT_EQ(argmax_label({0.2, 0.7, 0.1}), Difficulty::kNormal);
  EXPECT_EQ(argmax_label({0.6, 0.3, 0.1}), Difficulty::kEasy);
  EXPECT_EQ(argmax_label({0.1, 0.3, 0.6}), Difficulty::kHard);
  EXPECT_EQ(argmax_label({0.4, 0.2, 0.4}), Difficulty::kEasy);
  EXPECT_EQ(argmax_label({0.3, 0.4, 0.4}), Difficulty::kNormal);
  EXPECT_EQ(predict(ProbeParameters::zeros(3, 3), FeatureVector({1, 2, 3})), Difficulty::kNormal);
}

TEST(ProbeFile, RoundTripAndErrors) {
  testing_support::ScratchDir dir("probe");
  const auto p = random_params(64, 16, 3);
  save_probe(p, dir / "p.bin", "sim:abc/d64");
  const auto loaded = load_probe(dir / "p.bin");
  EXPECT_EQ(loaded.params, p);
  EXPECT_EQ(loaded.provider_fingerprint, "sim:abc/d64");
  EXPECT_EQ(loaded.trailer["class_order"], nlohmann::json({"Easy", "Normal", "Hard"}));

  EXPECT_NO_THROW(load_probe(dir / "p.bin", {64, std::string("sim:abc/d64")}));
  EXPECT_THROW(load_probe(dir / "p.bin", {128, std::nullopt}), ValidationError);
  EXPECT_THROW(load_probe(dir / "p.bin", {std::nullopt, std::string("other")}), ValidationError);

  std::string bytes = io::read_file(dir / "p.bin");
  std::string bad = bytes;
  bad[0] = 'X';
  io::write_file(dir / "magic.bin", bad);
  EXPECT_THROW(load_probe(dir / "magic.bin"), FormatError);
  std::string version = bytes;
  version[4] = 9;
  io::write_file(dir / "version.bin", version);
  EXPECT_THROW(load_probe(dir / "version.bin"), FormatError);
  io::write_file(dir / "short.bin", bytes.substr(0, 100));
  EXPECT_THROW(load_probe(dir / "short.bin"), FormatError);

  // The fingerprint identifies the parameters.
  EXPECT_EQ(probe_fingerprint(p), probe_fingerprint(loaded.params));
  EXPECT_NE(probe_fingerprint(p), probe_fingerprint(random_params(64, 16, 4)));
}
