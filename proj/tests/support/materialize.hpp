#pragma once

// Writes an in-memory planted dataset to disk in the shapes the pipeline
// ingests: ratings file, item-URI mapping and a warm feature cache.

#include <filesystem>
#include <sstream>

#include <nlohmann/json.hpp>

#include "lodfm/fetcher.hpp"

#include "support/fsutil.hpp"
#include "support/synthetic.hpp"

namespace testutil {

inline std::string item_uri(const std::string& item) {
  return "http://example.org/item/" + item;
}

inline void materialize(const synthetic::PlantedPoData& planted,
                        const std::filesystem::path& dir) {
  std::ostringstream ratings;
  for (const std::string& user : planted.dataset.users())
    for (const auto& [item, fb] : planted.dataset.interactions(user))
      ratings << user << "::" << item << "::" << (fb.positive ? 5 : 2) << "::0\n";
  write_file(dir / "ratings.dat", ratings.str());

  std::ostringstream mapping;
  for (const std::string& item : planted.dataset.items())
    mapping << item << "\t" << item_uri(item) << "\n";
  write_file(dir / "mapping.tsv", mapping.str());

  lodfm::FeatureCache cache(dir / "cache");
  for (const auto& [item, k] : planted.knowledge) {
    const std::string uri = item_uri(item);
    nlohmann::json po;
    po["item"] = uri;
    po["template"] = "po";
    po["bindings"] = nlohmann::json::array();
    for (const auto& [p, o] : k.po) po["bindings"].push_back({p, o});
    po["fetched_at"] = "2026-01-01T00:00:00Z";
    cache.store(lodfm::TemplateId::po, uri, po);

    nlohmann::json sp;
    sp["item"] = uri;
    sp["template"] = "sp";
    sp["bindings"] = nlohmann::json::array();
    for (const auto& [s, p] : k.sp) sp["bindings"].push_back({s, p});
    sp["fetched_at"] = "2026-01-01T00:00:00Z";
    cache.store(lodfm::TemplateId::sp, uri, sp);

    nlohmann::json pr;
    pr["item"] = uri;
    pr["template"] = "pr";
    pr["bindings"] = nlohmann::json::array();
    if (k.pagerank_raw) pr["bindings"].push_back(*k.pagerank_raw);
    pr["fetched_at"] = "2026-01-01T00:00:00Z";
    cache.store(lodfm::TemplateId::pr, uri, pr);
  }
}

}  // namespace testutil
