#include <catch2/catch_amalgamated.hpp>

#include "lodfm/sparql.hpp"

#include "support/fixture_server.hpp"

using namespace lodfm;

TEST_CASE("query templates carry the expected placeholder counts") {
  CHECK(QueryTemplate::get(TemplateId::po).placeholder_count() == 2);
  CHECK(QueryTemplate::get(TemplateId::sp).placeholder_count() == 1);
  CHECK(QueryTemplate::get(TemplateId::pr).placeholder_count() == 1);
}

TEST_CASE("query instantiation substitutes every placeholder") {
  const std::string uri = "http://dbpedia.org/resource/The_Godfather";
  const std::string q = instantiate_query(QueryTemplate::get(TemplateId::po), uri);
  CHECK(q.find("<itemURI>") == std::string::npos);
  std::size_t occurrences = 0, pos = 0;
  while ((pos = q.find("<" + uri + ">", pos)) != std::string::npos) {
    ++occurrences;
    ++pos;
  }
  CHECK(occurrences == 2);
  CHECK(q.find("SELECT DISTINCT ?p ?o WHERE") != std::string::npos);
}

TEST_CASE("item URIs that could escape the query slot are rejected") {
  CHECK_THROWS_AS(instantiate_query(QueryTemplate::get(TemplateId::sp), "not-a-uri"),
                  StructuralError);
  CHECK_THROWS_AS(instantiate_query(QueryTemplate::get(TemplateId::sp),
                                    "http://x.org/a b"),
                  StructuralError);
  CHECK_THROWS_AS(instantiate_query(QueryTemplate::get(TemplateId::sp),
                                    "http://x.org/a> . ?s ?p ?o"),
                  StructuralError);
  CHECK_NOTHROW(instantiate_query(QueryTemplate::get(TemplateId::sp),
                                  "http://x.org/Fran%C3%A7ois"));
}

TEST_CASE("pair binding parsing dedups and order-normalizes") {
  const std::string body = fixture::pairs_body(
      "p", "o",
      {{"http://p/b", "http://o/2"},
       {"http://p/a", "http://o/1"},
       {"http://p/b", "http://o/2"}});
  const std::vector<UriPair> pairs = parse_pair_bindings(body, "p", "o");
  REQUIRE(pairs.size() == 2);
  CHECK(pairs[0] == UriPair{"http://p/a", "http://o/1"});
  CHECK(pairs[1] == UriPair{"http://p/b", "http://o/2"});
}

TEST_CASE("malformed SPARQL bodies are parse errors") {
  CHECK_THROWS_AS(parse_pair_bindings("this is not json", "p", "o"), ParseError);
  CHECK_THROWS_AS(parse_pair_bindings("{\"head\":{}}", "p", "o"), ParseError);
  CHECK_THROWS_AS(parse_pair_bindings(fixture::pairs_body("s", "p", {{"a", "b"}}),
                                      "p", "o"),
                  ParseError);
}

TEST_CASE("score binding parsing") {
  SECTION("numeric literal") {
    auto score = parse_score_binding(fixture::score_body(std::string("273.5")));
    REQUIRE(score.has_value());
    CHECK(*score == 273.5);
  }
  SECTION("no binding means no score") {
    CHECK_FALSE(parse_score_binding(fixture::score_body(std::nullopt)).has_value());
  }
  SECTION("non-numeric literal") {
    CHECK_THROWS_AS(parse_score_binding(fixture::score_body(std::string("high"))),
                    ParseError);
    CHECK_THROWS_AS(parse_score_binding(fixture::score_body(std::string("1.5x"))),
                    ParseError);
  }
  SECTION("negative literal violates non-negativity") {
    CHECK_THROWS_AS(parse_score_binding(fixture::score_body(std::string("-3.0"))),
                    ParseError);
  }
}

TEST_CASE("excluded properties") {
  CHECK(po_property_excluded("http://dbpedia.org/ontology/wikiPageRedirects"));
  CHECK(po_property_excluded("http://dbpedia.org/ontology/wikiPageExternalLink"));
  CHECK_FALSE(po_property_excluded("http://dbpedia.org/ontology/director"));
  CHECK(sp_property_excluded("http://dbpedia.org/ontology/wikiPageDisambiguates"));
  CHECK(sp_property_excluded("http://dbpedia.org/ontology/wikiPageRedirects"));
  CHECK_FALSE(sp_property_excluded("http://dbpedia.org/ontology/knownFor"));
}
