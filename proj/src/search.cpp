#include "ts3/search.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "ts3/checkpoint.hpp"
#include "ts3/error.hpp"
#include "ts3/log.hpp"

namespace ts3 {
namespace {

namespace tn = ts3::tensor;

Vector to_vector(const Tensor& t) { return Vector(t.values().begin(), t.values().end()); }

// Stored vectors are kept float-representable so a saved index reloads
// bit-identically.
Vector to_stored_vector(const Tensor& t) {
  Vector v;
  v.reserve(t.size());
  for (double x : t.values()) v.push_back(static_cast<double>(static_cast<float>(x)));
  return v;
}

double norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

double cosine(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) {
    throw DataError("cosine of vectors with " + std::to_string(u.size()) + " and " + std::to_string(v.size()) +
                    " entries");
  }
  const double nu = norm(u);
  const double nv = norm(v);
  if (nu == 0.0 || nv == 0.0) throw DataError("cosine of a zero vector");
  double dot = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) dot += u[i] * v[i];
  return std::clamp(dot / (nu * nv), -1.0, 1.0);
}

void SearchConfig::validate() const {
  if (!(beta >= 0.0 && beta <= 1.0)) throw ConfigError("beta must lie in [0, 1]");
  if (top_k < 1) throw ConfigError("top_k must be at least 1");
}

SearchIndex::SearchIndex(std::vector<IndexEntry> entries, std::vector<SkippedSnippet> skipped)
    : entries_(std::move(entries)), skipped_(std::move(skipped)) {
  std::set<std::string> seen;
  for (const auto& e : entries_) {
    if (e.code_vec.size() != entries_.front().code_vec.size() ||
        e.comment_vec.size() != entries_.front().comment_vec.size()) {
      throw DataError("vector dimension mismatch for snippet " + e.id);
    }
    if (!seen.insert(e.id).second) throw DataError("duplicate snippet id in index: " + e.id);
    if (norm(e.code_vec) == 0.0 || norm(e.comment_vec) == 0.0) throw DataError("zero vector for snippet " + e.id);
  }
}

const IndexEntry* SearchIndex::find(const std::string& id) const {
  for (const auto& e : entries_) {
    if (e.id == id) return &e;
  }
  return nullptr;
}

void SearchIndex::set_beta(double beta) {
  if (!(beta >= 0.0 && beta <= 1.0)) throw ConfigError("beta must lie in [0, 1]");
  beta_ = beta;
}

void SearchIndex::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["format"] = "ts3-index";
  manifest["beta"] = beta_;
  manifest["ids"] = nlohmann::json::array();
  manifest["code"] = nlohmann::json::array();
  manifest["comments"] = nlohmann::json::array();
  for (const auto& e : entries_) {
    manifest["ids"].push_back(e.id);
    manifest["code"].push_back(e.code);
    manifest["comments"].push_back(e.comment);
  }
  manifest["skipped"] = nlohmann::json::array();
  for (const auto& s : skipped_) manifest["skipped"].push_back({{"id", s.id}, {"reason", s.reason}});
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  if (!out) throw DataError("cannot write " + (dir / "manifest.json").string());
  out << manifest.dump(1) << '\n';

  const std::size_t dim = entries_.empty() ? 0 : entries_.front().code_vec.size();
  tn::NamedArray code{"code_vectors", static_cast<std::uint32_t>(entries_.size()), static_cast<std::uint32_t>(dim), {}};
  tn::NamedArray comment{"comment_vectors", code.rows, code.cols, {}};
  for (const auto& e : entries_) {
    for (double v : e.code_vec) code.values.push_back(static_cast<float>(v));
    for (double v : e.comment_vec) comment.values.push_back(static_cast<float>(v));
  }
  tn::save_arrays(dir / "vectors.ts3w", {code, comment});
}

SearchIndex SearchIndex::load(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw DataError("no index at " + dir.string() + " (missing manifest.json)");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("corrupt manifest.json: " + std::string(e.what()));
  }
  const auto arrays = tn::load_arrays(dir / "vectors.ts3w");
  const tn::NamedArray* code = nullptr;
  const tn::NamedArray* comment = nullptr;
  for (const auto& a : arrays) {
    if (a.name == "code_vectors") code = &a;
    if (a.name == "comment_vectors") comment = &a;
  }
  if (code == nullptr || comment == nullptr) throw DataError("index vectors missing");
  const auto& ids = manifest.at("ids");
  if (code->rows != ids.size() || comment->rows != ids.size() || code->cols != comment->cols) {
    throw DataError("index manifest and vectors disagree");
  }
  std::vector<IndexEntry> entries;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    IndexEntry e;
    e.id = ids[i].get<std::string>();
    e.code = manifest.at("code")[i].get<std::string>();
    e.comment = manifest.at("comments")[i].get<std::string>();
    for (std::size_t c = 0; c < code->cols; ++c) {
      e.code_vec.push_back(code->values[i * code->cols + c]);
      e.comment_vec.push_back(comment->values[i * comment->cols + c]);
    }
    entries.push_back(std::move(e));
  }
  std::vector<SkippedSnippet> skipped;
  for (const auto& s : manifest.value("skipped", nlohmann::json::array())) {
    skipped.push_back({s.at("id").get<std::string>(), s.at("reason").get<std::string>()});
  }
  SearchIndex index(std::move(entries), std::move(skipped));
  index.set_beta(manifest.value("beta", 0.5));
  return index;
}

SearchIndex build_index(std::span<const Snippet> snippets, const Model& model) {
  tn::NoGradGuard no_grad;
  std::vector<IndexEntry> entries;
  std::vector<SkippedSnippet> skipped;
  DecodeConfig greedy;
  greedy.max_steps = model.config().max_steps;
  for (const auto& s : snippets) {
    IndentTree tree({TreeNode{}});
    try {
      tree = build_tree(s.code);
    } catch (const DataError& e) {
      spdlog::warn("skipping snippet {}: {}", s.id, e.what());
      skipped.push_back({s.id, e.what()});
      continue;
    }
    const SeqEncoding code = model.encode_tree(tree);
    const auto ids = model.generate_ids(code.pooled, greedy);
    TokenSeq comment{decode_ids(ids, model.comment_vocab()), TokenKind::kNaturalLanguage};
    IndexEntry entry;
    entry.id = s.id;
    entry.code = s.code;
    entry.comment = comment.joined();
    entry.code_vec = to_stored_vector(code.pooled);
    entry.comment_vec = to_stored_vector(model.encode_comment(comment).pooled);
    entries.push_back(std::move(entry));
  }
  return SearchIndex(std::move(entries), std::move(skipped));
}

Vector encode_query(const std::string& query, const Model& model) {
  tn::NoGradGuard no_grad;
  const TokenSeq tokens = tokenize_nl(query);
  if (tokens.empty()) throw DataError("query has no tokens");
  Vector v = to_vector(model.encode_comment(tokens).pooled);
  if (norm(v) == 0.0) throw DataError("query encodes to a zero vector");
  return v;
}

double score(std::span<const double> query_vec, const IndexEntry& entry, double beta) {
  return beta * cosine(query_vec, entry.code_vec) + (1.0 - beta) * cosine(query_vec, entry.comment_vec);
}

RankedResults rank(std::span<const double> query_vec, const SearchIndex& index, const SearchConfig& cfg) {
  cfg.validate();
  if (index.empty()) throw DataError("cannot rank against an empty index");
  RankedResults out;
  out.hits.reserve(index.size());
  for (const auto& e : index.entries()) out.hits.emplace_back(e.id, score(query_vec, e, cfg.beta));
  std::sort(out.hits.begin(), out.hits.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  if (out.hits.size() > cfg.top_k) out.hits.resize(cfg.top_k);
  return out;
}

std::vector<metrics::RankResult> rank_queries(std::span<const LabeledQuery> queries, const SearchIndex& index,
                                              double beta) {
  std::vector<metrics::RankResult> results;
  results.reserve(queries.size());
  const SearchConfig cfg{beta, std::max<std::size_t>(index.size(), 1)};
  for (const auto& q : queries) {
    std::vector<std::string> ranked;
    for (const auto& hit : rank(q.vec, index, cfg).hits) ranked.push_back(hit.first);
    results.push_back(metrics::make_rank_result(q.id, std::move(ranked), {q.relevant_id}));
  }
  return results;
}

BetaTuning tune_beta(std::span<const LabeledQuery> queries, const SearchIndex& index) {
  if (queries.empty()) throw DataError("beta tuning needs at least one validation query");
  BetaTuning best;
  best.mrr = -1.0;
  for (int step = 0; step <= 20; ++step) {
    const double beta = step / 20.0;
    const double value = metrics::mrr(rank_queries(queries, index, beta));
    best.grid.emplace_back(beta, value);
    if (value > best.mrr) {
      best.mrr = value;
      best.beta = beta;
    }
  }
  return best;
}

double pairwise_satisfaction(std::span<const LabeledQuery> queries, const SearchIndex& index, double beta) {
  std::size_t satisfied = 0;
  std::size_t total = 0;
  for (const auto& q : queries) {
    const IndexEntry* target = index.find(q.relevant_id);
    if (target == nullptr) continue;
    const double own = score(q.vec, *target, beta);
    for (const auto& e : index.entries()) {
      if (e.id == q.relevant_id) continue;
      ++total;
      if (own > score(q.vec, e, beta)) ++satisfied;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(satisfied) / static_cast<double>(total);
}

}  // namespace ts3
