#pragma once

// Stage 2: a two-layer MLP over the prefill representation,
//   d = softmax(W2 relu(W1 h + b1) + b2),
// trained with mean cross-entropy and minibatch AdamW.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "diffadapt/core.hpp"
#include "diffadapt/labeling.hpp"

namespace diffadapt {

using ClassScores = std::array<double, kNumClasses>;

struct TrainingExample {
  FeatureVector feature;
  DifficultyLabel label;
};

std::vector<TrainingExample> training_examples(std::span<const LabeledExample> data);

struct TrainConfig {
  int epochs = 100;
  double learning_rate = 1e-3;
  double weight_decay = 0.01;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int batch_size = 64;
  std::size_t hidden_dim = 128;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
};

// Raw output scores (pre-softmax). Throws DomainError on dimension mismatch.
ClassScores logits(const ProbeParameters& params, const FeatureVector& feature);
// Class probabilities in (Easy, Normal, Hard) order; max-subtracted softmax.
ClassScores forward(const ProbeParameters& params, const FeatureVector& feature);
ClassScores softmax(const ClassScores& z);

// Mean negative log-likelihood via log-softmax. DomainError on an empty batch.
double loss(const ProbeParameters& params, std::span<const TrainingExample> batch);
// Exact gradient of loss(); ReLU'(0) = 0.
ProbeParameters gradient(const ProbeParameters& params, std::span<const TrainingExample> batch);

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases.
ProbeParameters initialize(std::size_t input_dim, std::size_t hidden_dim, std::uint64_t seed);

struct TrainResult {
  ProbeParameters params;
  std::vector<double> epoch_loss;  // mean minibatch loss per epoch
  double initial_loss = 0.0;       // full-dataset loss before the first step
  double final_loss = 0.0;         // full-dataset loss after training
  double train_accuracy = 0.0;
  std::vector<std::string> warnings;
};

// Deterministic for a fixed seed. Throws DomainError if the loss becomes
// NaN (with the epoch and batch in the message). `on_epoch` is called with
// (epoch, mean loss) after each epoch.
TrainResult train(std::span<const TrainingExample> data, const TrainConfig& config,
                  const std::function<void(int, double)>& on_epoch = {});

// argmax with ties resolved Normal, then Easy, then Hard.
DifficultyLabel argmax_label(const ClassScores& scores);
DifficultyLabel predict(const ProbeParameters& params, const FeatureVector& feature);
double accuracy(const ProbeParameters& params, std::span<const TrainingExample> data);

// Probe file: "DFAP", u32 version, u32 input_dim, u32 hidden_dim, then W1, b1,
// W2, b2 as little-endian float64, then a JSON trailer with the class order and
// the representation-provider fingerprint.
inline constexpr std::uint32_t kProbeFileVersion = 1;

struct ProbeFile {
  ProbeParameters params;
  std::string provider_fingerprint;
  nlohmann::json trailer;
};

std::string encode_probe(const ProbeParameters& params, const std::string& provider_fingerprint,
                         const nlohmann::json& extra = nlohmann::json::object());
ProbeFile decode_probe(std::string_view bytes);
void save_probe(const ProbeParameters& params, const std::filesystem::path& path,
                const std::string& provider_fingerprint,
                const nlohmann::json& extra = nlohmann::json::object());

struct ProbeExpectations {
  std::optional<std::size_t> input_dim;
  // Compared only when both this and the file's fingerprint are non-empty.
  std::optional<std::string> provider_fingerprint;
};

// FormatError on bad magic, version or truncation; ValidationError when the
// file disagrees with `expect`.
ProbeFile load_probe(const std::filesystem::path& path, const ProbeExpectations& expect = {});

// Stable identifier of a parameter set (hash of its encoding).
std::string probe_fingerprint(const ProbeParameters& params);

}  // namespace diffadapt
