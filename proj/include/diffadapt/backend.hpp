#pragma once

// Completion backends and representation providers. A backend turns a
// resolved request into a GenerationRecord; a representation provider turns a
// question into the probe's input vector.

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <semaphore>
#include <string>
#include <vector>

#include "diffadapt/core.hpp"
#include "diffadapt/feature_file.hpp"
#include "diffadapt/uncertainty.hpp"

namespace diffadapt {

struct CompletionRequest {
  // Strategy text placed at the start of the assistant turn; empty for plain
  // sampling. Rendered by render_assistant_prefill().
  std::string prompt_prefix;
  bool close_reasoning_block = false;
  double temperature = 0.6;
  std::optional<double> top_p;
  int max_tokens = 32768;
  int logprobs_top_k = 20;
  std::optional<std::uint64_t> seed;
  // Which strategy this request realises; carried into the record.
  StrategyId strategy = StrategyId::kNormal;
  int sample_index = 0;
};

// Backend failure after retries were exhausted (or a non-retryable error).
class BackendError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CompletionBackend {
 public:
  virtual ~CompletionBackend() = default;

  // Every returned record satisfies the core invariants and carries
  // completion_tokens <= request.max_tokens. The verdict is left unset.
  virtual GenerationRecord complete(const Problem& problem, const CompletionRequest& request) = 0;
  virtual bool reachable() { return true; }
  virtual std::string describe() const = 0;
};

class RepresentationProvider {
 public:
  virtual ~RepresentationProvider() = default;

  // Throws (LookupError, FormatError, BackendError, ...) when no vector can be
  // produced for the problem.
  virtual FeatureVector represent(const Problem& problem) = 0;
  virtual std::string fingerprint() const = 0;
};

// Assistant-turn opener for a strategy prefix. With reasoning blocks the
// prefix sits inside <think>; the Easy strategy also closes the block.
std::string render_assistant_prefill(std::string_view prefix, bool close_reasoning_block,
                                     bool reasoning_block);

struct RetryPolicy {
  int attempts = 3;
  // Delay before retry i (clamped to the last entry).
  std::vector<std::chrono::milliseconds> backoff = {std::chrono::milliseconds(500),
                                                    std::chrono::milliseconds(2000),
                                                    std::chrono::milliseconds(8000)};
};

struct OpenAIConfig {
  std::string base_url;  // e.g. http://localhost:8000 (a trailing /v1 is accepted)
  std::string model;
  std::string api_key;   // empty: read DIFFADAPT_API_KEY, then OPENAI_API_KEY
  std::string embedding_model;  // defaults to `model`
  bool reasoning_block = true;
  TailMode tail_mode = TailMode::kTailBucket;
  RetryPolicy retry;
  std::chrono::seconds timeout{600};
  int max_in_flight = 64;
};

// OpenAI-compatible chat-completions client. Logprobs are requested when
// logprobs_top_k > 0 and per-step entropies are computed with
// entropy_from_topk. Transport failures and 5xx/429 responses are retried.
class OpenAIBackend final : public CompletionBackend {
 public:
  explicit OpenAIBackend(OpenAIConfig config);
  ~OpenAIBackend() override;

  GenerationRecord complete(const Problem& problem, const CompletionRequest& request) override;
  bool reachable() override;
  std::string describe() const override;

  // POST {base}/v1/embeddings; returns the first embedding.
  std::vector<double> embed(const std::string& text);

  const OpenAIConfig& config() const { return config_; }

 private:
  std::string post_json(const std::string& path, const std::string& body, bool idempotent);

  OpenAIConfig config_;
  std::string scheme_host_port_;
  std::string path_prefix_;  // without trailing slash and without /v1
  std::counting_semaphore<> in_flight_;
};

// Parses one chat.completion response body into a record. Exposed for tests.
GenerationRecord parse_chat_completion(const std::string& body, const Problem& problem,
                                       const CompletionRequest& request, TailMode tail_mode);

class FeatureFileProvider final : public RepresentationProvider {
 public:
  explicit FeatureFileProvider(FeatureFile file);
  static std::unique_ptr<FeatureFileProvider> open(const std::filesystem::path& path);

  FeatureVector represent(const Problem& problem) override;
  std::string fingerprint() const override { return file_.fingerprint(); }
  const FeatureFile& file() const { return file_; }

 private:
  FeatureFile file_;
};

// Approximation for deployments without hidden-state access: the backend's
// embeddings route.
class EmbeddingsProvider final : public RepresentationProvider {
 public:
  explicit EmbeddingsProvider(std::shared_ptr<OpenAIBackend> client);

  FeatureVector represent(const Problem& problem) override;
  std::string fingerprint() const override;

 private:
  std::shared_ptr<OpenAIBackend> client_;
};

// Always fails; exercises the router's Normal fallback.
class DisabledProvider final : public RepresentationProvider {
 public:
  FeatureVector represent(const Problem& problem) override;
  std::string fingerprint() const override { return "disabled"; }
};

}  // namespace diffadapt
