#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "lodfm/fetcher.hpp"

#include "support/fixture_server.hpp"
#include "support/fsutil.hpp"

using namespace lodfm;
using testutil::TempDir;

namespace {

SparqlEndpointConfig test_config(const fixture::SparqlServer& server,
                                 const std::filesystem::path& cache) {
  SparqlEndpointConfig config;
  config.endpoint_url = server.endpoint();
  config.cache_dir = cache;
  config.timeout_seconds = 5.0;
  config.max_retries = 2;
  config.retry_backoff_seconds = 0.0;
  config.max_concurrent_requests = 3;
  return config;
}

const std::string kGodfather = "http://dbpedia.org/resource/The_Godfather";

}  // namespace

TEST_CASE("fetch_po returns the distinct outgoing pairs of the fixture") {
  fixture::SparqlServer server;
  server.set_po(kGodfather,
                {{"http://dbpedia.org/ontology/director",
                  "http://dbpedia.org/resource/Francis_Ford_Coppola"},
                 {"http://purl.org/dc/terms/subject",
                  "http://dbpedia.org/resource/Category:Films_about_organized_crime"},
                 {"http://dbpedia.org/ontology/director",
                  "http://dbpedia.org/resource/Francis_Ford_Coppola"}});
  TempDir tmp;
  SparqlFetcher fetcher(test_config(server, tmp.path));
  const std::vector<UriPair> pairs = fetcher.fetch_po(kGodfather);
  REQUIRE(pairs.size() == 2);
  CHECK(pairs[0].first == "http://dbpedia.org/ontology/director");
  CHECK(pairs[1].first == "http://purl.org/dc/terms/subject");
}

TEST_CASE("fetch_sp dedups bindings and keeps incoming knowledge") {
  fixture::SparqlServer server;
  server.set_sp(kGodfather,
                {{"http://dbpedia.org/resource/Carlo_Savina",
                  "http://dbpedia.org/ontology/knownFor"},
                 {"http://dbpedia.org/resource/Al_Pacino",
                  "http://dbpedia.org/ontology/notableWork"},
                 {"http://dbpedia.org/resource/The_Godfather_Part_II",
                  "http://dbpedia.org/ontology/previousWork"},
                 {"http://dbpedia.org/resource/Carlo_Savina",
                  "http://dbpedia.org/ontology/knownFor"}});
  TempDir tmp;
  SparqlFetcher fetcher(test_config(server, tmp.path));
  const std::vector<UriPair> pairs = fetcher.fetch_sp(kGodfather);
  CHECK(pairs.size() == 3);
  bool has_savina = false;
  for (const auto& [s, p] : pairs)
    if (s == "http://dbpedia.org/resource/Carlo_Savina" &&
        p == "http://dbpedia.org/ontology/knownFor")
      has_savina = true;
  CHECK(has_savina);
}

TEST_CASE("excluded properties never reach the feature space") {
  fixture::SparqlServer server;
  server.set_po(kGodfather,
                {{"http://dbpedia.org/ontology/wikiPageRedirects", "http://x/r"},
                 {"http://dbpedia.org/ontology/director", "http://x/d"}});
  server.set_sp(kGodfather,
                {{"http://x/s", "http://dbpedia.org/ontology/wikiPageDisambiguates"},
                 {"http://x/s", "http://dbpedia.org/ontology/knownFor"}});
  TempDir tmp;
  SparqlFetcher fetcher(test_config(server, tmp.path));
  const auto po = fetcher.fetch_po(kGodfather);
  REQUIRE(po.size() == 1);
  CHECK(po[0].first == "http://dbpedia.org/ontology/director");
  const auto sp = fetcher.fetch_sp(kGodfather);
  REQUIRE(sp.size() == 1);
  CHECK(sp[0].second == "http://dbpedia.org/ontology/knownFor");
}

TEST_CASE("fetch_pagerank parses scores and rejects bad literals") {
  fixture::SparqlServer server;
  TempDir tmp;
  SparqlFetcher fetcher(test_config(server, tmp.path));
  SECTION("numeric score") {
    server.set_pr(kGodfather, std::string("273.5"));
    auto score = fetcher.fetch_pagerank(kGodfather);
    REQUIRE(score.has_value());
    CHECK(*score == 273.5);
  }
  SECTION("no binding means absent") {
    server.set_pr(kGodfather, std::nullopt);
    CHECK_FALSE(fetcher.fetch_pagerank(kGodfather).has_value());
  }
  SECTION("negative score is a parse error and leaves no cache entry") {
    server.set_pr(kGodfather, std::string("-1.0"));
    CHECK_THROWS_AS(fetcher.fetch_pagerank(kGodfather), ParseError);
    CHECK_FALSE(std::filesystem::exists(
        fetcher.cache().path_for(TemplateId::pr, kGodfather)));
  }
}

TEST_CASE("malformed response bodies are parse errors and skip the cache") {
  fixture::SparqlServer server;
  server.set_raw("dct:subject", kGodfather, "<html>proxy error</html>");
  TempDir tmp;
  SparqlFetcher fetcher(test_config(server, tmp.path));
  CHECK_THROWS_AS(fetcher.fetch_po(kGodfather), ParseError);
  CHECK_FALSE(std::filesystem::exists(
      fetcher.cache().path_for(TemplateId::po, kGodfather)));
}

TEST_CASE("a warm cache makes fetches idempotent with zero network traffic") {
  fixture::SparqlServer server;
  server.set_po(kGodfather, {{"http://p/d", "http://o/c"}});
  TempDir tmp;
  SparqlFetcher fetcher(test_config(server, tmp.path));
  const auto first = fetcher.fetch_po(kGodfather);
  const std::size_t after_first = server.request_count();
  const auto second = fetcher.fetch_po(kGodfather);
  CHECK(first == second);
  CHECK(server.request_count() == after_first);
}

TEST_CASE("transport failures surface with their attempt count and no cache") {
  fixture::SparqlServer server;
  server.fail_uri("http://x.org/broken");
  TempDir tmp;
  SparqlFetcher fetcher(test_config(server, tmp.path));
  try {
    fetcher.fetch_po("http://x.org/broken");
    FAIL("expected TransportError");
  } catch (const TransportError& e) {
    CHECK(e.attempts() == 3);  // 1 + max_retries
  }
  CHECK(server.request_count() == 3);
  CHECK_FALSE(std::filesystem::exists(
      fetcher.cache().path_for(TemplateId::po, "http://x.org/broken")));
}

TEST_CASE("fetch_all collects per-item failures without aborting the batch") {
  fixture::SparqlServer server;
  server.set_po("http://x.org/good", {{"http://p/a", "http://o/a"}});
  server.set_sp("http://x.org/good", {});
  server.set_pr("http://x.org/good", std::string("3.0"));
  server.fail_uri("http://x.org/bad");
  TempDir tmp;
  SparqlFetcher fetcher(test_config(server, tmp.path));
  FeatureConfig sets;
  sets.po = sets.sp = sets.pr = true;
  auto result = fetcher.fetch_all({"http://x.org/good", "http://x.org/bad"}, sets);
  REQUIRE(result.knowledge.size() == 1);
  REQUIRE(result.failures.size() == 1);
  CHECK(result.failures[0].item_uri == "http://x.org/bad");
  const ItemKnowledge& k = result.knowledge.at("http://x.org/good");
  CHECK(k.po.size() == 1);
  CHECK(k.pagerank_raw == 3.0);
}

TEST_CASE("fetch_all resumes from the cache after an interrupt") {
  fixture::SparqlServer server;
  std::vector<std::string> items;
  for (int i = 0; i < 6; ++i) {
    std::string uri = "http://x.org/item" + std::to_string(i);
    server.set_po(uri, {{"http://p/a", "http://o/" + std::to_string(i)}});
    items.push_back(uri);
  }
  TempDir tmp;
  FeatureConfig sets;
  sets.po = true;
  SparqlFetcher fetcher(test_config(server, tmp.path));

  // "interrupted" first run: only half the items were processed
  std::vector<std::string> half(items.begin(), items.begin() + 3);
  fetcher.fetch_all(half, sets);
  CHECK(server.request_count() == 3);

  server.reset_count();
  auto result = fetcher.fetch_all(items, sets);
  CHECK(result.knowledge.size() == 6);
  CHECK(server.request_count() == 3);  // only the uncached half hit the network
}

TEST_CASE("cache round-trip reproduces the fetched knowledge exactly") {
  fixture::SparqlServer server;
  server.set_po(kGodfather, {{"http://p/d", "http://o/c"}, {"http://p/s", "http://o/x"}});
  server.set_sp(kGodfather, {{"http://s/f", "http://p/k"}});
  server.set_pr(kGodfather, std::string("42.25"));
  TempDir tmp;
  FeatureConfig sets;
  sets.po = sets.sp = sets.pr = true;
  SparqlFetcher fetcher(test_config(server, tmp.path));
  auto fetched = fetcher.fetch_all({kGodfather}, sets);
  REQUIRE(fetched.failures.empty());

  const std::map<std::string, std::string> mapping{{"movie1", kGodfather}};
  auto loaded = load_knowledge_from_cache(tmp.path, mapping, sets);
  REQUIRE(loaded.count("movie1") == 1);
  ItemKnowledge expected = fetched.knowledge.at(kGodfather);
  expected.item = "movie1";
  CHECK(loaded.at("movie1") == expected);
}

TEST_CASE("missing cache entries load as empty knowledge") {
  TempDir tmp;
  FeatureConfig sets;
  sets.po = sets.sp = true;
  auto loaded = load_knowledge_from_cache(
      tmp.path, {{"movie1", "http://x.org/unfetched"}}, sets);
  REQUIRE(loaded.count("movie1") == 1);
  CHECK(loaded.at("movie1").po.empty());
  CHECK(loaded.at("movie1").sp.empty());
  CHECK_FALSE(loaded.at("movie1").pagerank_raw.has_value());
  CHECK_THROWS_AS(load_knowledge_from_cache(tmp.path / "nope",
                                            {{"movie1", "http://x.org/u"}}, sets),
                  IoError);
}
