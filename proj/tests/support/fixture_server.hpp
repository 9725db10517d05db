#pragma once

// In-process SPARQL endpoint stand-in for fetcher tests: serves canned JSON
// bindings keyed by (template kind, item URI), counts requests and can inject
// failures.

#include <atomic>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

namespace fixture {

inline std::string pairs_body(const std::string& var1, const std::string& var2,
                              const std::vector<std::pair<std::string, std::string>>& pairs) {
  nlohmann::json doc;
  doc["head"]["vars"] = {var1, var2};
  nlohmann::json bindings = nlohmann::json::array();
  for (const auto& [a, b] : pairs) {
    nlohmann::json binding;
    binding[var1] = {{"type", "uri"}, {"value", a}};
    binding[var2] = {{"type", "uri"}, {"value", b}};
    bindings.push_back(binding);
  }
  doc["results"]["bindings"] = bindings;
  return doc.dump();
}

inline std::string score_body(const std::optional<std::string>& literal) {
  nlohmann::json doc;
  doc["head"]["vars"] = {"score"};
  nlohmann::json bindings = nlohmann::json::array();
  if (literal) {
    nlohmann::json binding;
    binding["score"] = {{"type", "literal"}, {"value", *literal}};
    bindings.push_back(binding);
  }
  doc["results"]["bindings"] = bindings;
  return doc.dump();
}

class SparqlServer {
 public:
  SparqlServer() {
    server_.Get("/sparql", [this](const httplib::Request& req, httplib::Response& res) {
      ++requests_;
      const std::string query = req.get_param_value("query");
      std::lock_guard<std::mutex> lock(mu_);
      for (const std::string& uri : failing_uris_) {
        if (query.find("<" + uri + ">") != std::string::npos) {
          res.status = 500;
          return;
        }
      }
      if (fail_next_ > 0) {
        --fail_next_;
        res.status = 503;
        return;
      }
      for (const auto& [key, body] : routes_) {
        const auto& [kind, uri] = key;
        if (query.find(kind) == std::string::npos) continue;
        if (query.find("<" + uri + ">") == std::string::npos) continue;
        res.set_content(body, "application/sparql-results+json");
        return;
      }
      // Unknown item: empty result set of the right shape.
      if (query.find("?score") != std::string::npos)
        res.set_content(score_body(std::nullopt), "application/sparql-results+json");
      else
        res.set_content(pairs_body("p", "o", {}), "application/sparql-results+json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~SparqlServer() {
    server_.stop();
    thread_.join();
  }

  std::string endpoint() const {
    return "http://127.0.0.1:" + std::to_string(port_) + "/sparql";
  }

  // Template kinds are recognized by substrings unique to each query.
  void set_po(const std::string& uri,
              const std::vector<std::pair<std::string, std::string>>& pairs) {
    set_route("dct:subject", uri, pairs_body("p", "o", pairs));
  }
  void set_sp(const std::string& uri,
              const std::vector<std::pair<std::string, std::string>>& pairs) {
    set_route("wikiPageDisambiguates", uri, pairs_body("s", "p", pairs));
  }
  void set_pr(const std::string& uri, const std::optional<std::string>& literal) {
    set_route("vrank:hasRank", uri, score_body(literal));
  }
  void set_raw(const std::string& kind, const std::string& uri, std::string body) {
    set_route(kind, uri, std::move(body));
  }

  void fail_uri(const std::string& uri) {
    std::lock_guard<std::mutex> lock(mu_);
    failing_uris_.push_back(uri);
  }
  void fail_next(std::size_t n) {
    std::lock_guard<std::mutex> lock(mu_);
    fail_next_ = n;
  }

  std::size_t request_count() const { return requests_.load(); }
  void reset_count() { requests_ = 0; }

 private:
  void set_route(const std::string& kind, const std::string& uri, std::string body) {
    std::lock_guard<std::mutex> lock(mu_);
    routes_[{kind, uri}] = std::move(body);
  }

  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<std::size_t> requests_{0};
  std::mutex mu_;
  std::map<std::pair<std::string, std::string>, std::string> routes_;
  std::vector<std::string> failing_uris_;
  std::size_t fail_next_ = 0;
};

}  // namespace fixture
