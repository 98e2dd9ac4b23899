#pragma once

// HTTP front end for the router.
//   POST /v1/route     {question, id?, gold_answer?, benchmark?, model?, difficulty_rating?}
//   POST /v1/classify  {feature: [...]} or the /v1/route problem fields
//   GET  /health
// Errors are {"error": {"code", "message"}} with a 4xx/5xx status.

#include <memory>
#include <string>

#include <json.hpp>

#include "diffadapt/strategy.hpp"

namespace httplib {
class Server;
}

namespace diffadapt {

struct ServiceInfo {
  std::string probe_fingerprint;
  std::string version = DIFFADAPT_VERSION;
};

// Request handling without the transport, so the endpoints are testable
// directly. Returns (status, body).
struct ServiceResponse {
  int status = 200;
  nlohmann::json body;
};

class RouterService {
 public:
  RouterService(std::shared_ptr<const Router> router, ServiceInfo info);
  ~RouterService();

  ServiceResponse handle_route(const std::string& body) const;
  ServiceResponse handle_classify(const std::string& body) const;
  ServiceResponse handle_health() const;

  // Binds host:port (port 0 picks a free one) and returns the bound port;
  // throws std::runtime_error if binding fails.
  int bind(const std::string& host, int port);
  // Serves until stop(); call after bind().
  void listen();
  void stop();

 private:
  std::shared_ptr<const Router> router_;
  ServiceInfo info_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace diffadapt
