#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "doctest.h"
#include "gradcheck.hpp"
#include "ts3/error.hpp"
#include "ts3/search.hpp"

using namespace ts3;
namespace tn = ts3::tensor;

namespace {

IndexEntry entry(std::string id, Vector code_vec, Vector comment_vec) {
  return {std::move(id), std::move(code_vec), std::move(comment_vec), "pass", "c"};
}

Vector unit(std::size_t dim, std::size_t axis) {
  Vector v(dim, 0.0);
  v[axis] = 1.0;
  return v;
}

// Comments point along the query axis, code vectors are orthogonal to every query.
SearchIndex comment_only_index(std::size_t n) {
  std::vector<IndexEntry> entries;
  for (std::size_t i = 0; i < n; ++i) {
    Vector code(2 * n, 0.0);
    code[n + (i + 1) % n] = 1.0;
    entries.push_back(entry("e" + std::to_string(i), code, unit(2 * n, i)));
  }
  return SearchIndex(entries);
}

std::vector<LabeledQuery> axis_queries(std::size_t n) {
  std::vector<LabeledQuery> qs;
  for (std::size_t i = 0; i < n; ++i) {
    Vector q = unit(2 * n, i);
    q[n + i] = 0.5;  // mild pull towards the wrong code vector
    qs.push_back({"q" + std::to_string(i), q, "e" + std::to_string(i)});
  }
  return qs;
}

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.d_model = 8;
  cfg.heads = 2;
  cfg.layers = 1;
  cfg.d_ff = 16;
  cfg.max_steps = 6;
  return cfg;
}

const Model& tiny_model() {
  static const Model m = Model::from_pairs(
      tiny_config(),
      PairSet(std::vector<CodeCommentPair>{{"a", "def add(a, b):\n    return a + b", "add numbers"},
                                           {"b", "def neg(x):\n    return -x", "negate value"}}),
      3);
  return m;
}

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("ts3_search_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("cosine similarity") {
  CHECK(cosine(Vector{1, 0}, Vector{1, 0}) == 1.0);
  CHECK(cosine(Vector{1, 0}, Vector{0, 1}) == 0.0);
  CHECK(cosine(Vector{1, 0}, Vector{-1, 0}) == -1.0);
  CHECK(cosine(Vector{1, 2, 3}, Vector{2, 4, 6}) == doctest::Approx(1.0));
  CHECK_THROWS_AS(cosine(Vector{0, 0}, Vector{1, 0}), DataError);
  CHECK_THROWS_AS(cosine(Vector{1, 0}, Vector{1, 0, 0}), DataError);
  const auto a = ts3::testing::random_values(16, 1);
  const auto b = ts3::testing::random_values(16, 2);
  const double c = cosine(a, b);
  CHECK(c >= -1.0);
  CHECK(c <= 1.0);
  CHECK(cosine(b, a) == doctest::Approx(c));
}

TEST_CASE("score interpolates code and comment similarity") {
  const IndexEntry e = entry("x", Vector{0.8, 0.6}, Vector{0.4, std::sqrt(1.0 - 0.16)});
  const Vector q{1.0, 0.0};
  CHECK(score(q, e, 0.5) == doctest::Approx(0.6));
  CHECK(score(q, e, 1.0) == doctest::Approx(0.8));
  CHECK(score(q, e, 0.0) == doctest::Approx(0.4));
  double prev = score(q, e, 0.0);
  for (int i = 1; i <= 10; ++i) {
    const double s = score(q, e, i / 10.0);
    CHECK(s >= prev - 1e-12);
    prev = s;
  }
}

TEST_CASE("search config and index validation") {
  SearchConfig cfg;
  cfg.beta = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.beta = 0.5;
  cfg.top_k = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK_THROWS(SearchIndex({entry("a", {1, 0}, {1, 0}), entry("a", {0, 1}, {0, 1})}));
  CHECK_THROWS(SearchIndex({entry("a", {1, 0}, {1, 0}), entry("b", {0, 1, 0}, {0, 1, 0})}));
  SearchIndex idx({entry("a", {1, 0}, {1, 0})});
  CHECK_THROWS(idx.set_beta(-0.1));
}

TEST_CASE("ranking") {
  const SearchIndex one({entry("only", {1, 1}, {0, 1})});
  const auto r1 = rank(Vector{1, 0}, one, SearchConfig{0.5, 10});
  REQUIRE(r1.hits.size() == 1);
  CHECK(r1.hits[0].first == "only");

  std::vector<IndexEntry> entries;
  for (int i = 0; i < 12; ++i) {
    entries.push_back(entry("s" + std::to_string(100 + i), ts3::testing::random_values(6, 10 + i),
                            ts3::testing::random_values(6, 40 + i)));
  }
  entries.push_back(entry("tie_b", {1, 0, 0, 0, 0, 0}, {1, 0, 0, 0, 0, 0}));
  entries.push_back(entry("tie_a", {2, 0, 0, 0, 0, 0}, {3, 0, 0, 0, 0, 0}));
  const SearchIndex idx(entries);
  const Vector q{1, 0, 0, 0, 0, 0};
  const auto full = rank(q, idx, SearchConfig{0.3, 100});
  CHECK(full.hits.size() == idx.size());
  CHECK(full.hits[0].first == "tie_a");
  CHECK(full.hits[1].first == "tie_b");
  std::set<std::string> ids;
  for (std::size_t i = 0; i < full.hits.size(); ++i) {
    ids.insert(full.hits[i].first);
    if (i > 0) CHECK(full.hits[i - 1].second >= full.hits[i].second);
    CHECK(full.hits[i].second == doctest::Approx(score(q, *idx.find(full.hits[i].first), 0.3)));
  }
  CHECK(ids.size() == idx.size());

  const auto top = rank(q, idx, SearchConfig{0.3, 5});
  REQUIRE(top.hits.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) CHECK(top.hits[i] == full.hits[i]);

  Vector scaled = ts3::testing::random_values(6, 77);
  const auto base = rank(scaled, idx, SearchConfig{0.7, 100});
  for (double& x : scaled) x *= 12.5;
  const auto big = rank(scaled, idx, SearchConfig{0.7, 100});
  for (std::size_t i = 0; i < base.hits.size(); ++i) CHECK(big.hits[i].first == base.hits[i].first);

  CHECK_THROWS_AS(rank(q, SearchIndex{}, SearchConfig{}), DataError);
}

TEST_CASE("beta tuning picks comments when only comments match") {
  const auto idx = comment_only_index(6);
  const auto qs = axis_queries(6);
  const BetaTuning t = tune_beta(qs, idx);
  CHECK(t.beta == 0.0);
  CHECK(t.mrr == doctest::Approx(1.0));
  REQUIRE(t.grid.size() == 21);
  for (std::size_t i = 0; i < t.grid.size(); ++i) {
    CHECK(t.grid[i].first == doctest::Approx(i * 0.05));
    CHECK(t.grid[i].second == doctest::Approx(metrics::mrr(rank_queries(qs, idx, t.grid[i].first))));
    CHECK(t.mrr >= t.grid[i].second);
  }
  CHECK(t.grid.back().second < 1.0);
  CHECK(pairwise_satisfaction(qs, idx, 0.0) == 1.0);
  CHECK(pairwise_satisfaction(qs, idx, 1.0) < 1.0);
  CHECK_THROWS_AS(tune_beta(std::span<const LabeledQuery>{}, idx), DataError);
}

TEST_CASE("beta tuning picks code when only code matches") {
  std::vector<IndexEntry> entries;
  for (std::size_t i = 0; i < 5; ++i) entries.push_back(entry("e" + std::to_string(i), unit(10, i), unit(10, 5 + (i + 1) % 5)));
  const SearchIndex idx(entries);
  std::vector<LabeledQuery> qs;
  for (std::size_t i = 0; i < 5; ++i) {
    Vector q = unit(10, i);
    q[5 + i] = 0.5;
    qs.push_back({"q" + std::to_string(i), q, "e" + std::to_string(i)});
  }
  const BetaTuning t = tune_beta(qs, idx);
  CHECK(t.mrr == doctest::Approx(1.0));
  CHECK(t.beta > 0.0);
  CHECK(t.mrr >= metrics::mrr(rank_queries(qs, idx, 0.0)));
  CHECK(t.mrr >= metrics::mrr(rank_queries(qs, idx, 1.0)));
}

TEST_CASE("building an index from a model") {
  const Model& m = tiny_model();
  CHECK(build_index(std::span<const Snippet>{}, m).empty());

  const std::vector<Snippet> snippets{{"s1", "def add(a, b):\n    return a + b"},
                                      {"s2", "def neg(x):\n    return -x"},
                                      {"bad", "def f():\n        x = 1\n    y = 2"}};
  const SearchIndex a = build_index(snippets, m);
  CHECK(a.size() == 2);
  REQUIRE(a.skipped().size() == 1);
  CHECK(a.skipped()[0].id == "bad");
  CHECK(a.find("bad") == nullptr);
  for (const auto& e : a.entries()) {
    CHECK(e.code_vec.size() == 8);
    CHECK(e.comment_vec.size() == 8);
    CHECK(e.comment == m.summarize(e.code));
  }
  const SearchIndex b = build_index(snippets, m);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a.entries()[i].code_vec == b.entries()[i].code_vec);
    CHECK(a.entries()[i].comment_vec == b.entries()[i].comment_vec);
  }

  const auto q = encode_query("add numbers", m);
  CHECK(q.size() == 8);
  CHECK_THROWS_AS(encode_query("   ", m), DataError);
  const auto hits = rank(q, a, SearchConfig{0.5, 10}).hits;
  CHECK(hits.size() == 2);
}

TEST_CASE("index save and load round trip") {
  const std::vector<Snippet> snippets{{"s1", "def add(a, b):\n    return a + b"}, {"s2", "def neg(x):\n    return -x"}};
  SearchIndex idx = build_index(snippets, tiny_model());
  idx.set_beta(0.35);
  const auto dir = scratch("roundtrip");
  idx.save(dir);
  const SearchIndex back = SearchIndex::load(dir);
  CHECK(back.beta() == 0.35);
  REQUIRE(back.size() == idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    CHECK(back.entries()[i].id == idx.entries()[i].id);
    CHECK(back.entries()[i].code == idx.entries()[i].code);
    CHECK(back.entries()[i].comment == idx.entries()[i].comment);
    CHECK(back.entries()[i].code_vec == idx.entries()[i].code_vec);
    CHECK(back.entries()[i].comment_vec == idx.entries()[i].comment_vec);
  }
  CHECK_THROWS(SearchIndex::load(scratch("missing")));
  std::filesystem::remove_all(dir);
}
