#pragma once

#include <atomic>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "lodfm/errors.hpp"
#include "lodfm/feature_index.hpp"
#include "lodfm/knowledge.hpp"
#include "lodfm/sparql.hpp"
#include "lodfm/util.hpp"

namespace lodfm {

struct SparqlEndpointConfig {
  std::string endpoint_url;
  double timeout_seconds = 30.0;
  std::size_t max_retries = 3;
  double retry_backoff_seconds = 1.0;
  std::size_t max_concurrent_requests = 4;
  std::filesystem::path cache_dir;

  void validate() const {
    if (endpoint_url.empty()) throw StructuralError("endpoint URL is empty");
    if (!(timeout_seconds > 0.0)) throw StructuralError("timeout must be positive");
    if (retry_backoff_seconds < 0.0)
      throw StructuralError("retry backoff must be non-negative");
    if (max_concurrent_requests < 1)
      throw StructuralError("max concurrent requests must be >= 1");
  }
};

/// On-disk result cache: one UTF-8 JSON file per (template, item URI), named
/// by a stable hash of the two, so reruns resume where they stopped. Files are
/// written to a temp name and renamed into place; a failed fetch never touches
/// the cache.
class FeatureCache {
 public:
  explicit FeatureCache(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
  }

  const std::filesystem::path& dir() const { return dir_; }

  std::filesystem::path path_for(TemplateId id, const std::string& item_uri) const {
    const std::string key = std::string(template_name(id)) + "\n" + item_uri;
    return dir_ / (std::string(template_name(id)) + "-" + fingerprint_hex(key) + ".json");
  }

  std::optional<nlohmann::json> load(TemplateId id, const std::string& item_uri) const {
    const std::filesystem::path path = path_for(id, item_uri);
    std::ifstream is(path);
    if (!is) return std::nullopt;
    nlohmann::json doc = nlohmann::json::parse(is, nullptr, false);
    if (doc.is_discarded())
      throw ParseError("corrupt cache file " + path.string());
    return doc;
  }

  void store(TemplateId id, const std::string& item_uri,
             const nlohmann::json& doc) const {
    const std::filesystem::path path = path_for(id, item_uri);
    const std::filesystem::path tmp =
        path.string() + ".tmp." +
        std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()));
    {
      std::ofstream os(tmp);
      if (!os) throw IoError("cannot write cache file " + tmp.string());
      os << doc.dump(2) << "\n";
    }
    std::filesystem::rename(tmp, path);
  }

 private:
  std::filesystem::path dir_;
};

namespace detail {
// Splits "http://host:port/path" into the httplib client base and the path.
inline std::pair<std::string, std::string> split_endpoint(const std::string& url) {
  std::size_t scheme = url.find("://");
  if (scheme == std::string::npos)
    throw StructuralError("endpoint URL must be absolute: '" + url + "'");
  std::size_t path = url.find('/', scheme + 3);
  if (path == std::string::npos) return {url, "/sparql"};
  return {url.substr(0, path), url.substr(path)};
}

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(
      std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}
}  // namespace detail

/// Runs the three query templates against an endpoint, caching every
/// successful response. Transient failures are retried with exponential
/// backoff; what survives the retry budget surfaces as a TransportError
/// carrying the attempt count.
class SparqlFetcher {
 public:
  explicit SparqlFetcher(SparqlEndpointConfig config)
      : config_(std::move(config)), cache_(config_.cache_dir) {
    config_.validate();
  }

  const FeatureCache& cache() const { return cache_; }

  std::vector<UriPair> fetch_po(const std::string& item_uri) {
    nlohmann::json doc = fetch_template(TemplateId::po, item_uri);
    return pairs_from_cache_doc(doc);
  }

  std::vector<UriPair> fetch_sp(const std::string& item_uri) {
    nlohmann::json doc = fetch_template(TemplateId::sp, item_uri);
    return pairs_from_cache_doc(doc);
  }

  std::optional<double> fetch_pagerank(const std::string& item_uri) {
    nlohmann::json doc = fetch_template(TemplateId::pr, item_uri);
    return score_from_cache_doc(doc);
  }

  struct FetchFailure {
    std::string item_uri;
    std::string error;
  };
  struct FetchAllResult {
    std::map<std::string, ItemKnowledge> knowledge;  // keyed by item URI
    std::vector<FetchFailure> failures;
  };

  // Fetches the enabled templates for every item with at most
  // max_concurrent_requests in flight. Per-item failures are collected, never
  // aborting the batch; completed items are already cached, so a rerun only
  // refetches what is missing.
  FetchAllResult fetch_all(const std::vector<std::string>& item_uris,
                           FeatureConfig sets) {
    if (item_uris.empty()) throw DegenerateInputError("empty item list");
    FetchAllResult result;
    std::mutex mu;
    std::atomic<std::size_t> cursor{0};
    const std::size_t workers =
        std::min<std::size_t>(config_.max_concurrent_requests, item_uris.size());
    auto work = [&]() {
      while (true) {
        const std::size_t i = cursor.fetch_add(1);
        if (i >= item_uris.size()) return;
        const std::string& uri = item_uris[i];
        try {
          ItemKnowledge k;
          k.item = uri;
          if (sets.po) k.po = fetch_po(uri);
          if (sets.sp) k.sp = fetch_sp(uri);
          if (sets.pr) k.pagerank_raw = fetch_pagerank(uri);
          canonicalize(k);
          std::lock_guard<std::mutex> lock(mu);
          result.knowledge.emplace(uri, std::move(k));
        } catch (const std::exception& e) {
          std::lock_guard<std::mutex> lock(mu);
          result.failures.push_back({uri, e.what()});
        }
      }
    };
    std::vector<std::thread> threads;
    threads.reserve(workers);
    for (std::size_t t = 0; t < workers; ++t) threads.emplace_back(work);
    for (std::thread& t : threads) t.join();
    std::sort(result.failures.begin(), result.failures.end(),
              [](const FetchFailure& a, const FetchFailure& b) {
                return a.item_uri < b.item_uri;
              });
    return result;
  }

 private:
  // Cached document for (template, item); performs the network round trip
  // only on a cache miss.
  nlohmann::json fetch_template(TemplateId id, const std::string& item_uri) {
    validate_item_uri(item_uri);
    if (auto cached = cache_.load(id, item_uri)) return *cached;
    const std::string query = instantiate_query(QueryTemplate::get(id), item_uri);
    const std::string body = execute(query);
    nlohmann::json doc;
    doc["item"] = item_uri;
    doc["template"] = template_name(id);
    if (id == TemplateId::pr) {
      std::optional<double> score = parse_score_binding(body);
      doc["bindings"] = nlohmann::json::array();
      if (score) doc["bindings"].push_back(*score);
    } else {
      const char* v1 = id == TemplateId::po ? "p" : "s";
      const char* v2 = id == TemplateId::po ? "o" : "p";
      std::vector<UriPair> pairs = parse_pair_bindings(body, v1, v2);
      auto excluded = [&](const UriPair& pair) {
        const std::string& property = id == TemplateId::po ? pair.first : pair.second;
        return id == TemplateId::po ? po_property_excluded(property)
                                    : sp_property_excluded(property);
      };
      std::erase_if(pairs, excluded);
      doc["bindings"] = nlohmann::json::array();
      for (const auto& [a, b] : pairs)
        doc["bindings"].push_back(nlohmann::json::array({a, b}));
    }
    doc["fetched_at"] = detail::utc_timestamp();
    cache_.store(id, item_uri, doc);
    return doc;
  }

  static std::vector<UriPair> pairs_from_cache_doc(const nlohmann::json& doc) {
    std::vector<UriPair> pairs;
    for (const auto& entry : doc.at("bindings"))
      pairs.emplace_back(entry.at(0).get<std::string>(),
                         entry.at(1).get<std::string>());
    return pairs;
  }

  static std::optional<double> score_from_cache_doc(const nlohmann::json& doc) {
    const auto& bindings = doc.at("bindings");
    if (bindings.empty()) return std::nullopt;
    return bindings.front().get<double>();
  }

  std::string execute(const std::string& query) {
    const auto [base, path] = detail::split_endpoint(config_.endpoint_url);
    const std::string target = path + "?query=" + url_encode(query);
    std::string last_error;
    const std::size_t attempts = config_.max_retries + 1;
    for (std::size_t attempt = 1; attempt <= attempts; ++attempt) {
      if (attempt > 1) {
        const double backoff =
            std::min(config_.retry_backoff_seconds *
                         std::pow(2.0, static_cast<double>(attempt - 2)),
                     30.0);
        std::this_thread::sleep_for(std::chrono::duration<double>(backoff));
      }
      httplib::Client client(base);
      client.set_connection_timeout(std::chrono::duration<double>(config_.timeout_seconds));
      client.set_read_timeout(std::chrono::duration<double>(config_.timeout_seconds));
      httplib::Result res =
          client.Get(target, {{"Accept", "application/sparql-results+json"}});
      if (!res) {
        last_error = "transport failure: " + httplib::to_string(res.error());
        continue;
      }
      if (res->status != 200) {
        last_error = "HTTP status " + std::to_string(res->status);
        continue;
      }
      return res->body;
    }
    throw TransportError("SPARQL request failed after " + std::to_string(attempts) +
                             " attempt(s): " + last_error,
                         attempts);
  }

  SparqlEndpointConfig config_;
  FeatureCache cache_;
};

// Offline knowledge assembly from a warm cache: maps each dataset item id to
// the cached results of its URI. Missing cache entries yield empty lists and
// no score, matching the treatment of unmapped items.
inline std::map<std::string, ItemKnowledge> load_knowledge_from_cache(
    const std::filesystem::path& cache_dir,
    const std::map<std::string, std::string>& item_to_uri, FeatureConfig sets) {
  if (!std::filesystem::exists(cache_dir))
    throw IoError("cache directory does not exist: " + cache_dir.string());
  FeatureCache cache(cache_dir);
  std::map<std::string, ItemKnowledge> out;
  for (const auto& [item, uri] : item_to_uri) {
    ItemKnowledge k;
    k.item = item;
    if (sets.po) {
      if (auto doc = cache.load(TemplateId::po, uri))
        for (const auto& entry : doc->at("bindings"))
          k.po.emplace_back(entry.at(0).get<std::string>(),
                            entry.at(1).get<std::string>());
    }
    if (sets.sp) {
      if (auto doc = cache.load(TemplateId::sp, uri))
        for (const auto& entry : doc->at("bindings"))
          k.sp.emplace_back(entry.at(0).get<std::string>(),
                            entry.at(1).get<std::string>());
    }
    if (sets.pr) {
      if (auto doc = cache.load(TemplateId::pr, uri)) {
        const auto& bindings = doc->at("bindings");
        if (!bindings.empty()) k.pagerank_raw = bindings.front().get<double>();
      }
    }
    canonicalize(k);
    out.emplace(item, std::move(k));
  }
  return out;
}

}  // namespace lodfm
