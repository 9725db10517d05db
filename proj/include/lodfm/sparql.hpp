#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lodfm/errors.hpp"
#include "lodfm/knowledge.hpp"

namespace lodfm {

enum class TemplateId { po, sp, pr };

inline const char* template_name(TemplateId id) {
  switch (id) {
    case TemplateId::po: return "po";
    case TemplateId::sp: return "sp";
    case TemplateId::pr: return "pr";
  }
  return "?";
}

// Outgoing knowledge: every ontology-namespace (property, object) pair with
// the item as subject (objects restricted to URIs), plus dct:subject pairs.
inline constexpr const char* kPoQueryTemplate = R"(PREFIX dbo:<http://dbpedia.org/ontology/>
PREFIX dct:<http://purl.org/dc/terms/>

SELECT DISTINCT ?p ?o WHERE { { <itemURI> ?p ?o .
FILTER REGEX(STR(?p), "^http://dbpedia.org/ontology") .
FILTER (STR(?p) NOT IN (dbo:wikiPageRedirects,
dbo:wikiPageExternalLink)) . FILTER ISURI(?o) }
UNION { <itemURI> ?p ?o . FILTER ( STR(?p) IN (dct:subject) ) } })";

// Incoming knowledge: every ontology-namespace (subject, property) pair with
// the item as object.
inline constexpr const char* kSpQueryTemplate = R"(PREFIX dbo:<http://dbpedia.org/ontology/>

SELECT DISTINCT ?s ?p WHERE { ?s ?p <itemURI> .
FILTER REGEX(STR(?p), "^http://dbpedia.org/ontology") .
FILTER (STR(?p) NOT IN (dbo:wikiPageRedirects,
dbo:wikiPageExternalLink, dbo:wikiPageDisambiguates)) })";

// The entity's precomputed PageRank score from the vrank graph.
inline constexpr const char* kPrQueryTemplate = R"(PREFIX rdf:<http://www.w3.org/1999/02/22-rdf-syntax-ns#>
PREFIX dbo:<http://dbpedia.org/ontology/>
PREFIX vrank:<http://purl.org/voc/vrank#>

SELECT ?score FROM <http://dbpedia.org>
FROM <http://people.aifb.kit.edu/ath/#DBpedia_PageRank>
WHERE { <itemURI> vrank:hasRank/vrank:rankValue ?score . })";

struct QueryTemplate {
  TemplateId id;
  std::string text;

  std::size_t placeholder_count() const {
    std::size_t count = 0, pos = 0;
    while ((pos = text.find("<itemURI>", pos)) != std::string::npos) {
      ++count;
      pos += 9;
    }
    return count;
  }

  static const QueryTemplate& get(TemplateId id) {
    static const QueryTemplate po{TemplateId::po, kPoQueryTemplate};
    static const QueryTemplate sp{TemplateId::sp, kSpQueryTemplate};
    static const QueryTemplate pr{TemplateId::pr, kPrQueryTemplate};
    switch (id) {
      case TemplateId::po: return po;
      case TemplateId::sp: return sp;
      case TemplateId::pr: return pr;
    }
    return po;
  }
};

// Absolute URI, no whitespace, no '>': anything else could escape the
// <itemURI> slot and alter the query.
inline void validate_item_uri(const std::string& uri) {
  if (uri.find("://") == std::string::npos)
    throw StructuralError("item URI must be absolute: '" + uri + "'");
  if (uri.find_first_of(" \t\r\n>") != std::string::npos)
    throw StructuralError("item URI contains forbidden characters: '" + uri + "'");
}

// Exact string substitution of every <itemURI> occurrence.
inline std::string instantiate_query(const QueryTemplate& tpl,
                                     const std::string& item_uri) {
  validate_item_uri(item_uri);
  std::string query = tpl.text;
  std::size_t pos = 0;
  while ((pos = query.find("<itemURI>", pos)) != std::string::npos) {
    query.replace(pos, 9, "<" + item_uri + ">");
    pos += item_uri.size() + 2;
  }
  return query;
}

// Properties the queries exclude; enforced again on the client side so a
// misbehaving endpoint cannot smuggle them into the feature space.
inline bool po_property_excluded(const std::string& property) {
  return property == "http://dbpedia.org/ontology/wikiPageRedirects" ||
         property == "http://dbpedia.org/ontology/wikiPageExternalLink";
}

inline bool sp_property_excluded(const std::string& property) {
  return po_property_excluded(property) ||
         property == "http://dbpedia.org/ontology/wikiPageDisambiguates";
}

namespace detail {
inline nlohmann::json parse_sparql_body(const std::string& body) {
  nlohmann::json doc = nlohmann::json::parse(body, nullptr, false);
  if (doc.is_discarded() || !doc.contains("results") ||
      !doc["results"].contains("bindings") || !doc["results"]["bindings"].is_array())
    throw ParseError("malformed SPARQL results body");
  return doc;
}
}  // namespace detail

// Extracts distinct (var1, var2) bindings from a SPARQL JSON results body,
// order-normalized by sorting.
inline std::vector<UriPair> parse_pair_bindings(const std::string& body,
                                                const std::string& var1,
                                                const std::string& var2) {
  nlohmann::json doc = detail::parse_sparql_body(body);
  std::set<UriPair> pairs;
  for (const auto& binding : doc["results"]["bindings"]) {
    if (!binding.contains(var1) || !binding.contains(var2))
      throw ParseError("SPARQL binding lacks ?" + var1 + "/?" + var2);
    const auto& v1 = binding[var1];
    const auto& v2 = binding[var2];
    if (!v1.contains("value") || !v2.contains("value"))
      throw ParseError("SPARQL binding term lacks a value");
    pairs.emplace(v1["value"].get<std::string>(), v2["value"].get<std::string>());
  }
  return {pairs.begin(), pairs.end()};
}

// Extracts the ?score binding; absent bindings mean the entity has no score.
inline std::optional<double> parse_score_binding(const std::string& body) {
  nlohmann::json doc = detail::parse_sparql_body(body);
  const auto& bindings = doc["results"]["bindings"];
  if (bindings.empty()) return std::nullopt;
  const auto& binding = bindings.front();
  if (!binding.contains("score") || !binding["score"].contains("value"))
    throw ParseError("SPARQL binding lacks ?score");
  const std::string literal = binding["score"]["value"].get<std::string>();
  double score = 0.0;
  std::size_t consumed = 0;
  try {
    score = std::stod(literal, &consumed);
  } catch (const std::exception&) {
    throw ParseError("non-numeric PageRank literal '" + literal + "'");
  }
  if (consumed != literal.size() || !std::isfinite(score))
    throw ParseError("non-numeric PageRank literal '" + literal + "'");
  if (score < 0.0)
    throw ParseError("negative PageRank literal '" + literal + "'");
  return score;
}

}  // namespace lodfm
