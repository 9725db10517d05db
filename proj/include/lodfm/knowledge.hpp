#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "lodfm/errors.hpp"
#include "lodfm/util.hpp"

namespace lodfm {

using UriPair = std::pair<std::string, std::string>;

/// Per-item background knowledge fetched from the SPARQL endpoint:
/// outgoing (property, object) pairs, incoming (subject, property) pairs and
/// the raw PageRank score. Items without a DBpedia mapping simply carry empty
/// lists and no score.
struct ItemKnowledge {
  std::string item;
  std::vector<UriPair> po;  // sorted, no duplicates
  std::vector<UriPair> sp;  // sorted, no duplicates
  std::optional<double> pagerank_raw;
  // Raw score divided by the maximum over all items; filled by
  // apply_pagerank_normalization. Items without a score get 0.
  std::optional<double> pagerank_norm;

  bool operator==(const ItemKnowledge&) const = default;
};

// Sorts and dedups the pair lists, validates the raw PageRank score.
inline void canonicalize(ItemKnowledge& k) {
  auto clean = [](std::vector<UriPair>& pairs) {
    std::sort(pairs.begin(), pairs.end());
    pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
  };
  clean(k.po);
  clean(k.sp);
  if (k.pagerank_raw) {
    if (!std::isfinite(*k.pagerank_raw) || *k.pagerank_raw < 0.0)
      throw StructuralError("PageRank score for " + k.item +
                            " must be finite and non-negative");
  }
}

// Divides every present score by the maximum present score; absent scores map
// to 0. Requires at least one positive score.
inline std::map<std::string, double> normalize_pagerank(
    const std::map<std::string, std::optional<double>>& raw) {
  double max_score = 0.0;
  bool any = false;
  for (const auto& [item, score] : raw) {
    if (score) {
      any = true;
      max_score = std::max(max_score, *score);
    }
  }
  if (!any || max_score <= 0.0)
    throw DegenerateInputError(
        "PageRank normalization needs at least one positive score");
  std::map<std::string, double> out;
  for (const auto& [item, score] : raw)
    out[item] = score ? *score / max_score : 0.0;
  return out;
}

inline void apply_pagerank_normalization(
    std::map<std::string, ItemKnowledge>& knowledge) {
  std::map<std::string, std::optional<double>> raw;
  for (const auto& [item, k] : knowledge) raw[item] = k.pagerank_raw;
  std::map<std::string, double> norm = normalize_pagerank(raw);
  for (auto& [item, k] : knowledge) k.pagerank_norm = norm.at(item);
}

// Stable content hash over a knowledge map, embedded into run reports so the
// exact feature inputs of a run can be identified later.
inline std::string knowledge_fingerprint(
    const std::map<std::string, ItemKnowledge>& knowledge) {
  std::ostringstream os;
  os.precision(17);
  for (const auto& [item, k] : knowledge) {
    os << item << '\n';
    for (const auto& [p, o] : k.po) os << "po " << p << ' ' << o << '\n';
    for (const auto& [s, p] : k.sp) os << "sp " << s << ' ' << p << '\n';
    if (k.pagerank_raw) os << "pr " << *k.pagerank_raw << '\n';
  }
  return fingerprint_hex(os.str());
}

}  // namespace lodfm
