#include "diffadapt/service.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "diffadapt/io.hpp"
#include "diffadapt/json_io.hpp"
#include "diffadapt/verification.hpp"

namespace diffadapt {

using nlohmann::json;

namespace {

ServiceResponse error_response(int status, std::string code, std::string message) {
  return ServiceResponse{status, json{{"error", {{"code", std::move(code)}, {"message", std::move(message)}}}}};
}

// Thrown while decoding a request body.
struct RequestError {
  int status;
  std::string code;
  std::string message;
};

json parse_body(const std::string& body) {
  try {
    json j = json::parse(body);
    if (!j.is_object()) throw RequestError{400, "invalid_json", "request body must be a JSON object"};
    return j;
  } catch (const json::parse_error& e) {
    throw RequestError{400, "invalid_json", e.what()};
  }
}

template <typename T>
std::optional<T> optional_field(const json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  try {
    return j[key].get<T>();
  } catch (const json::exception&) {
    throw RequestError{400, "invalid_field", std::string("field '") + key + "' has the wrong type"};
  }
}

Problem problem_from_request(const json& j) {
  const auto question = optional_field<std::string>(j, "question");
  if (!question || question->empty()) {
    throw RequestError{400, "missing_field", "field 'question' is required"};
  }
  std::string id = optional_field<std::string>(j, "id").value_or("");
  if (id.empty()) id = "req-" + io::hex64(io::fnv1a64(*question));
  const auto rating = optional_field<int>(j, "difficulty_rating");
  try {
    return Problem(std::move(id), *question, optional_field<std::string>(j, "gold_answer").value_or(""),
                   rating, optional_field<std::string>(j, "benchmark").value_or(""), "serve");
  } catch (const ValidationError& e) {
    throw RequestError{400, "invalid_field", e.what()};
  }
}

}  // namespace

RouterService::RouterService(std::shared_ptr<const Router> router, ServiceInfo info)
    : router_(std::move(router)), info_(std::move(info)) {
  if (info_.probe_fingerprint.empty()) info_.probe_fingerprint = probe_fingerprint(router_->probe());
}

RouterService::~RouterService() { stop(); }

ServiceResponse RouterService::handle_route(const std::string& body) const {
  try {
    const json j = parse_body(body);
    const Problem problem = problem_from_request(j);
    const auto model = optional_field<std::string>(j, "model");
    const RoutedResult r = router_->route(problem, 0, model);
    if (!r.ok()) return error_response(502, "backend_error", *r.error);
    const GenerationRecord& rec = *r.record;
    json out{{"id", problem.id()},
             {"answer_text", rec.completion_text()},
             {"answer", extract_answer(rec.completion_text()) ? json(*extract_answer(rec.completion_text())) : json()},
             {"label", r.label},
             {"tokens", rec.completion_tokens()},
             {"max_tokens", r.params.max_tokens},
             {"finish_reason", std::string(to_string(rec.finish_reason()))},
             {"entropy", rec.generation_entropy() ? json(*rec.generation_entropy()) : json()},
             {"fallback", r.fallback}};
    if (r.probabilities) out["probabilities"] = *r.probabilities;
    if (rec.verdict()) out["verdict"] = *rec.verdict();
    return ServiceResponse{200, std::move(out)};
  } catch (const RequestError& e) {
    return error_response(e.status, e.code, e.message);
  } catch (const std::exception& e) {
    return error_response(500, "internal_error", e.what());
  }
}

ServiceResponse RouterService::handle_classify(const std::string& body) const {
  try {
    const json j = parse_body(body);
    std::optional<FeatureVector> feature;
    if (j.contains("feature")) {
      try {
        feature = j["feature"].get<FeatureVector>();
      } catch (const std::exception& e) {
        return error_response(400, "invalid_field", std::string("feature: ") + e.what());
      }
    } else {
      const Problem problem = problem_from_request(j);
      try {
        feature = router_->provider().represent(problem);
      } catch (const std::exception& e) {
        return error_response(503, "representation_unavailable", e.what());
      }
    }
    const std::size_t expected = router_->probe().input_dim();
    if (feature->dim() != expected) {
      return error_response(422, "dimension_mismatch",
                            "feature has dim " + std::to_string(feature->dim()) +
                                ", the probe expects " + std::to_string(expected));
    }
    const Classification c = router_->classify(*feature);
    return ServiceResponse{200, json{{"label", c.label}, {"probabilities", c.probabilities}}};
  } catch (const RequestError& e) {
    return error_response(e.status, e.code, e.message);
  } catch (const std::exception& e) {
    return error_response(500, "internal_error", e.what());
  }
}

ServiceResponse RouterService::handle_health() const {
  bool reachable = false;
  try {
    reachable = router_->backend().reachable();
  } catch (const std::exception&) {
    reachable = false;
  }
  return ServiceResponse{200, json{{"status", "ok"},
                                   {"version", info_.version},
                                   {"probe_fingerprint", info_.probe_fingerprint},
                                   {"probe_input_dim", router_->probe().input_dim()},
                                   {"provider", router_->provider().fingerprint()},
                                   {"backend", router_->backend().describe()},
                                   {"backend_reachable", reachable}}};
}

int RouterService::bind(const std::string& host, int port) {
  server_ = std::make_unique<httplib::Server>();
  auto reply = [](httplib::Response& res, const ServiceResponse& r) {
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  server_->Post("/v1/route", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, handle_route(req.body));
  });
  server_->Post("/v1/classify", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, handle_classify(req.body));
  });
  server_->Get("/health", [this, reply](const httplib::Request&, httplib::Response& res) {
    reply(res, handle_health());
  });
  int bound = port;
  if (port == 0) {
    bound = server_->bind_to_any_port(host);
  } else if (!server_->bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
  spdlog::info("listening on {}:{}", host, bound);
  return bound;
}

void RouterService::listen() {
  if (!server_) throw std::logic_error("RouterService::listen before bind");
  server_->listen_after_bind();
}

void RouterService::stop() {
  if (server_) server_->stop();
}

}  // namespace diffadapt
