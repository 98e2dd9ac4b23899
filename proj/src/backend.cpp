#include "diffadapt/backend.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include <json.hpp>

#include "diffadapt/io.hpp"

namespace diffadapt {

using nlohmann::json;

std::string render_assistant_prefill(std::string_view prefix, bool close_reasoning_block,
                                     bool reasoning_block) {
  if (prefix.empty()) return {};
  std::string out;
  if (reasoning_block) {
    out = "<think>\n" + std::string(prefix) + "\n";
    if (close_reasoning_block) out += "</think>\n";
  } else {
    out = std::string(prefix) + "\n";
  }
  return out;
}

// --- OpenAI-compatible client --------------------------------------------

namespace {

struct Endpoint {
  std::string scheme_host_port;
  std::string path_prefix;
};

Endpoint parse_base_url(const std::string& url) {
  static const std::string kSchemeSep = "://";
  const auto scheme_end = url.find(kSchemeSep);
  if (scheme_end == std::string::npos) {
    throw ValidationError("backend URL must include a scheme (http:// or https://): " + url);
  }
  const auto path_start = url.find('/', scheme_end + kSchemeSep.size());
  Endpoint ep;
  ep.scheme_host_port = url.substr(0, path_start);
  std::string path = path_start == std::string::npos ? "" : url.substr(path_start);
  while (!path.empty() && path.back() == '/') path.pop_back();
  if (path.size() >= 3 && path.substr(path.size() - 3) == "/v1") path.resize(path.size() - 3);
  ep.path_prefix = path;
  return ep;
}

std::string resolve_api_key(const std::string& configured) {
  if (!configured.empty()) return configured;
  for (const char* var : {"DIFFADAPT_API_KEY", "OPENAI_API_KEY"}) {
    if (const char* v = std::getenv(var); v != nullptr && *v != '\0') return v;
  }
  return {};
}

std::uint64_t derive_seed(std::uint64_t seed, const std::string& problem_id, StrategyId strategy,
                          int sample_index) {
  std::uint64_t h = io::fnv1a64(problem_id, io::fnv1a64("seed") ^ seed);
  h = io::fnv1a64(std::to_string(class_index(strategy)) + ":" + std::to_string(sample_index), h);
  return h & 0x7fffffffULL;
}

FinishReason map_finish_reason(const json& value) {
  if (!value.is_string()) return FinishReason::kError;
  const auto s = value.get<std::string>();
  if (s == "stop" || s == "eos" || s == "end_turn") return FinishReason::kStop;
  if (s == "length" || s == "max_tokens") return FinishReason::kLength;
  return FinishReason::kError;
}

TokenStep parse_step(const json& item, TailMode tail_mode) {
  const std::string token = item.at("token").get<std::string>();
  // Servers occasionally report -0.0 or a rounding hair above zero.
  auto clamp_lp = [](double lp) {
    if (lp > 0.0 && lp < 1e-6) return 0.0;
    return lp;
  };
  const double chosen = clamp_lp(item.at("logprob").get<double>());
  std::vector<Alternative> alternatives;
  if (const auto it = item.find("top_logprobs"); it != item.end() && it->is_array()) {
    for (const auto& alt : *it) {
      alternatives.push_back({alt.at("token").get<std::string>(), clamp_lp(alt.at("logprob").get<double>())});
    }
  }
  const bool listed = std::any_of(alternatives.begin(), alternatives.end(),
                                  [&](const Alternative& a) { return a.token == token; });
  if (!listed) alternatives.push_back({token, chosen});
  std::stable_sort(alternatives.begin(), alternatives.end(),
                   [](const Alternative& a, const Alternative& b) { return a.logprob > b.logprob; });
  double entropy;
  try {
    entropy = entropy_from_topk(alternatives, tail_mode);
  } catch (const DomainError&) {
    // Listed mass slightly above one (duplicated token strings, rounding).
    entropy = entropy_from_topk(alternatives, TailMode::kRenormalize);
  }
  return TokenStep(token, chosen, std::move(alternatives), entropy);
}

}  // namespace

GenerationRecord parse_chat_completion(const std::string& body, const Problem& problem,
                                       const CompletionRequest& request, TailMode tail_mode) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::exception& e) {
    throw BackendError(std::string("completion response is not JSON: ") + e.what());
  }
  if (!j.contains("choices") || !j["choices"].is_array() || j["choices"].empty()) {
    throw BackendError("completion response has no choices");
  }
  const json& choice = j["choices"][0];
  std::string text;
  if (choice.contains("message") && choice["message"].contains("content") &&
      choice["message"]["content"].is_string()) {
    text = choice["message"]["content"].get<std::string>();
  } else if (choice.contains("text") && choice["text"].is_string()) {
    text = choice["text"].get<std::string>();
  }
  const FinishReason finish = map_finish_reason(choice.value("finish_reason", json()));

  std::vector<TokenStep> steps;
  if (request.logprobs_top_k > 0 && choice.contains("logprobs") && choice["logprobs"].is_object()) {
    const json& lp = choice["logprobs"];
    if (lp.contains("content") && lp["content"].is_array()) {
      steps.reserve(lp["content"].size());
      for (const auto& item : lp["content"]) steps.push_back(parse_step(item, tail_mode));
    }
  }
  int tokens = 0;
  if (!steps.empty()) {
    tokens = static_cast<int>(steps.size());
  } else if (j.contains("usage") && j["usage"].contains("completion_tokens")) {
    tokens = j["usage"]["completion_tokens"].get<int>();
  }
  if (tokens > request.max_tokens) {
    throw BackendError("backend returned " + std::to_string(tokens) +
                       " tokens, over the requested max of " + std::to_string(request.max_tokens));
  }
  if (request.logprobs_top_k > 0 && steps.empty()) {
    spdlog::debug("completion for '{}' carried no logprobs; record has no steps", problem.id());
  }
  return GenerationRecord(problem.id(), request.strategy, request.sample_index, std::move(text),
                          std::move(steps), tokens, finish);
}

OpenAIBackend::OpenAIBackend(OpenAIConfig config)
    : config_(std::move(config)),
      in_flight_(std::max(1, config_.max_in_flight)) {
  auto endpoint = parse_base_url(config_.base_url);
  scheme_host_port_ = std::move(endpoint.scheme_host_port);
  path_prefix_ = std::move(endpoint.path_prefix);
  config_.api_key = resolve_api_key(config_.api_key);
  if (config_.embedding_model.empty()) config_.embedding_model = config_.model;
  if (config_.retry.attempts < 1) config_.retry.attempts = 1;
}

OpenAIBackend::~OpenAIBackend() = default;

std::string OpenAIBackend::describe() const {
  return "openai:" + config_.base_url + (config_.model.empty() ? "" : "#" + config_.model);
}

std::string OpenAIBackend::post_json(const std::string& path, const std::string& body,
                                     bool idempotent) {
  in_flight_.acquire();
  struct Release {
    std::counting_semaphore<>& s;
    ~Release() { s.release(); }
  } release{in_flight_};

  const int attempts = idempotent ? config_.retry.attempts : 1;
  std::string last_error;
  for (int attempt = 0; attempt < attempts; ++attempt) {
    if (attempt > 0 && !config_.retry.backoff.empty()) {
      const auto idx = std::min<std::size_t>(static_cast<std::size_t>(attempt - 1),
                                             config_.retry.backoff.size() - 1);
      std::this_thread::sleep_for(config_.retry.backoff[idx]);
    }
    httplib::Client client(scheme_host_port_);
    client.set_connection_timeout(std::chrono::seconds(10));
    client.set_read_timeout(config_.timeout);
    client.set_write_timeout(std::chrono::seconds(60));
    httplib::Headers headers;
    if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);
    auto res = client.Post(path_prefix_ + path, headers, body, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      spdlog::warn("{} {} failed (attempt {}/{}): {}", describe(), path, attempt + 1, attempts,
                   last_error);
      continue;
    }
    if (res->status >= 200 && res->status < 300) return res->body;
    last_error = "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 300);
    if (res->status != 429 && res->status < 500) break;
    spdlog::warn("{} {} failed (attempt {}/{}): {}", describe(), path, attempt + 1, attempts,
                 last_error);
  }
  throw BackendError(describe() + " " + path + ": " + last_error);
}

GenerationRecord OpenAIBackend::complete(const Problem& problem, const CompletionRequest& request) {
  json messages = json::array({json{{"role", "user"}, {"content", problem.question()}}});
  const std::string prefill = render_assistant_prefill(
      request.prompt_prefix, request.close_reasoning_block, config_.reasoning_block);
  json body{{"model", config_.model},
            {"temperature", request.temperature},
            {"max_tokens", request.max_tokens}};
  if (!prefill.empty()) {
    messages.push_back(json{{"role", "assistant"}, {"content", prefill}});
    body["continue_final_message"] = true;
    body["add_generation_prompt"] = false;
  }
  body["messages"] = std::move(messages);
  if (request.top_p) body["top_p"] = *request.top_p;
  if (request.logprobs_top_k > 0) {
    body["logprobs"] = true;
    body["top_logprobs"] = request.logprobs_top_k;
  }
  if (request.seed) {
    body["seed"] = derive_seed(*request.seed, problem.id(), request.strategy, request.sample_index);
  }
  const std::string response = post_json("/v1/chat/completions", body.dump(), true);
  return parse_chat_completion(response, problem, request, config_.tail_mode);
}

std::vector<double> OpenAIBackend::embed(const std::string& text) {
  const json body{{"model", config_.embedding_model}, {"input", text}};
  const std::string response = post_json("/v1/embeddings", body.dump(), true);
  try {
    const json j = json::parse(response);
    return j.at("data").at(0).at("embedding").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw BackendError(std::string("malformed embeddings response: ") + e.what());
  }
}

bool OpenAIBackend::reachable() {
  httplib::Client client(scheme_host_port_);
  client.set_connection_timeout(std::chrono::seconds(2));
  client.set_read_timeout(std::chrono::seconds(5));
  httplib::Headers headers;
  if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);
  auto res = client.Get(path_prefix_ + "/v1/models", headers);
  return res && res->status >= 200 && res->status < 300;
}

// --- representation providers ---------------------------------------------

FeatureFileProvider::FeatureFileProvider(FeatureFile file) : file_(std::move(file)) {}

std::unique_ptr<FeatureFileProvider> FeatureFileProvider::open(const std::filesystem::path& path) {
  return std::make_unique<FeatureFileProvider>(FeatureFile::read(path));
}

FeatureVector FeatureFileProvider::represent(const Problem& problem) {
  return file_.lookup(problem.id());
}

EmbeddingsProvider::EmbeddingsProvider(std::shared_ptr<OpenAIBackend> client)
    : client_(std::move(client)) {}

FeatureVector EmbeddingsProvider::represent(const Problem& problem) {
  return FeatureVector(client_->embed(problem.question()));
}

std::string EmbeddingsProvider::fingerprint() const {
  return "embeddings:" + client_->config().embedding_model;
}

FeatureVector DisabledProvider::represent(const Problem& problem) {
  throw BackendError("representation provider disabled (problem '" + problem.id() + "')");
}

}  // namespace diffadapt
