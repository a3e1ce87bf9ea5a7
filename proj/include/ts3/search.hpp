#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "ts3/metrics.hpp"
#include "ts3/model.hpp"

namespace ts3 {

using Vector = std::vector<double>;

// u.v / (|u| |v|); throws DataError for a zero vector or length mismatch.
double cosine(std::span<const double> u, std::span<const double> v);

struct IndexEntry {
  std::string id;
  Vector code_vec;     // V_c: tree-encoded code
  Vector comment_vec;  // V_s: encoded generated comment
  std::string code;
  std::string comment;  // generated comment
};

struct SkippedSnippet {
  std::string id;
  std::string reason;
};

struct SearchConfig {
  double beta = 0.5;
  std::size_t top_k = 10;

  void validate() const;
};

struct RankedResults {
  std::vector<std::pair<std::string, double>> hits;  // descending score, id ascending on ties
};

class SearchIndex {
 public:
  SearchIndex() = default;
  explicit SearchIndex(std::vector<IndexEntry> entries, std::vector<SkippedSnippet> skipped = {});

  const std::vector<IndexEntry>& entries() const { return entries_; }
  const std::vector<SkippedSnippet>& skipped() const { return skipped_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const IndexEntry* find(const std::string& id) const;

  double beta() const { return beta_; }
  void set_beta(double beta);

  // manifest.json (ids, code, comments, beta, skipped) + vectors.ts3w.
  void save(const std::filesystem::path& dir) const;
  static SearchIndex load(const std::filesystem::path& dir);

 private:
  std::vector<IndexEntry> entries_;
  std::vector<SkippedSnippet> skipped_;
  double beta_ = 0.5;
};

struct Snippet {
  std::string id;
  std::string code;
};

/// Encodes every snippet with the frozen model: V_c from the tree encoder,
/// a greedy comment from the actor, V_s from the comment encoder. Snippets
/// whose tree cannot be built are skipped and listed in skipped().
SearchIndex build_index(std::span<const Snippet> snippets, const Model& model);

// V_q for a natural-language query.
Vector encode_query(const std::string& query, const Model& model);

// beta * cos(q, V_c) + (1 - beta) * cos(q, V_s)
double score(std::span<const double> query_vec, const IndexEntry& entry, double beta);

RankedResults rank(std::span<const double> query_vec, const SearchIndex& index, const SearchConfig& cfg);

struct LabeledQuery {
  std::string id;
  Vector vec;
  std::string relevant_id;
};

// Ranks every labeled query over the whole index at `beta`.
std::vector<metrics::RankResult> rank_queries(std::span<const LabeledQuery> queries, const SearchIndex& index,
                                              double beta);

struct BetaTuning {
  double beta = 0.0;
  double mrr = 0.0;
  std::vector<std::pair<double, double>> grid;  // (beta, MRR)
};

/// Grid search over beta = 0.00, 0.05, ..., 1.00 maximizing MRR; ties keep
/// the smaller beta.
BetaTuning tune_beta(std::span<const LabeledQuery> queries, const SearchIndex& index);

/// Fraction of (query, other snippet) pairs with score(q, c_i) > score(q, c_j).
double pairwise_satisfaction(std::span<const LabeledQuery> queries, const SearchIndex& index, double beta);

}  // namespace ts3
