#include "ts3/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ts3/error.hpp"

namespace ts3::metrics {
namespace {

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts ngrams(const Tokens& tokens, std::size_t n) {
  NgramCounts out;
  if (tokens.size() < n) return out;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    ++out[Tokens(tokens.begin() + static_cast<std::ptrdiff_t>(i), tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return out;
}

void check_corpus(std::span<const Tokens> candidates, std::span<const Tokens> references) {
  if (candidates.size() != references.size()) {
    throw DataError("candidate count " + std::to_string(candidates.size()) + " differs from reference count " +
                    std::to_string(references.size()));
  }
  if (references.empty()) throw DataError("metric over an empty corpus");
}

}  // namespace

double bleu_n(std::span<const Tokens> candidates, std::span<const Tokens> references, std::size_t n) {
  check_corpus(candidates, references);
  if (n == 0) throw ConfigError("BLEU order must be at least 1");
  std::size_t cand_len = 0;
  std::size_t ref_len = 0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    cand_len += candidates[i].size();
    ref_len += references[i].size();
  }
  if (cand_len == 0) return 0.0;

  double log_sum = 0.0;
  std::size_t orders = 0;
  for (std::size_t k = 1; k <= n; ++k) {
    std::size_t matched = 0;
    std::size_t total = 0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      const auto c = ngrams(candidates[i], k);
      const auto r = ngrams(references[i], k);
      for (const auto& [gram, count] : c) {
        total += count;
        if (auto it = r.find(gram); it != r.end()) matched += std::min(count, it->second);
      }
    }
    if (total == 0) continue;
    if (matched == 0) return 0.0;
    log_sum += std::log(static_cast<double>(matched) / static_cast<double>(total));
    ++orders;
  }
  const double precision = std::exp(log_sum / static_cast<double>(orders));
  const double bp = cand_len < ref_len
                        ? std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(cand_len))
                        : 1.0;
  return bp * precision;
}

double sentence_bleu(const Tokens& candidate, const Tokens& reference, std::size_t n) {
  return bleu_n(std::span<const Tokens>(&candidate, 1), std::span<const Tokens>(&reference, 1), n);
}

double rouge_l(const Tokens& candidate, const Tokens& reference, double beta) {
  if (candidate.empty() || reference.empty()) return 0.0;
  const std::size_t m = candidate.size();
  const std::size_t n = reference.size();
  std::vector<std::size_t> prev(n + 1, 0), cur(n + 1, 0);
  for (std::size_t i = 1; i <= m; ++i) {
    for (std::size_t j = 1; j <= n; ++j) {
      cur[j] = candidate[i - 1] == reference[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  const double lcs = static_cast<double>(prev[n]);
  if (lcs == 0.0) return 0.0;
  const double p = lcs / static_cast<double>(m);
  const double r = lcs / static_cast<double>(n);
  const double b2 = beta * beta;
  return (1.0 + b2) * p * r / (r + b2 * p);
}

double meteor_lite(const Tokens& candidate, const Tokens& reference) {
  if (candidate.empty() || reference.empty()) return 0.0;
  std::map<std::string, std::vector<std::size_t>> ref_positions;
  for (std::size_t j = 0; j < reference.size(); ++j) ref_positions[reference[j]].push_back(j);
  std::map<std::string, std::size_t> used;
  std::vector<std::pair<std::size_t, std::size_t>> alignment;
  for (std::size_t i = 0; i < candidate.size(); ++i) {
    auto it = ref_positions.find(candidate[i]);
    if (it == ref_positions.end()) continue;
    std::size_t& k = used[candidate[i]];
    if (k < it->second.size()) alignment.emplace_back(i, it->second[k++]);
  }
  if (alignment.empty()) return 0.0;
  std::size_t chunks = 1;
  for (std::size_t a = 1; a < alignment.size(); ++a) {
    const bool contiguous = alignment[a].first == alignment[a - 1].first + 1 &&
                            alignment[a].second == alignment[a - 1].second + 1;
    if (!contiguous) ++chunks;
  }
  const double matches = static_cast<double>(alignment.size());
  const double p = matches / static_cast<double>(candidate.size());
  const double r = matches / static_cast<double>(reference.size());
  const double f_mean = 10.0 * p * r / (r + 9.0 * p);
  const double penalty = 0.5 * std::pow(static_cast<double>(chunks) / matches, 3.0);
  return f_mean * (1.0 - penalty);
}

std::vector<double> cider_per_pair(std::span<const Tokens> candidates, std::span<const Tokens> references,
                                   std::size_t n_max) {
  check_corpus(candidates, references);
  const double corpus = static_cast<double>(references.size());
  std::vector<double> scores(candidates.size(), 0.0);
  for (std::size_t n = 1; n <= n_max; ++n) {
    std::vector<NgramCounts> ref_grams;
    std::map<std::vector<std::string>, std::size_t> doc_freq;
    for (const auto& r : references) {
      ref_grams.push_back(ngrams(r, n));
      for (const auto& entry : ref_grams.back()) ++doc_freq[entry.first];
    }
    auto idf = [&](const std::vector<std::string>& gram) {
      auto it = doc_freq.find(gram);
      const double df = it == doc_freq.end() ? 1.0 : static_cast<double>(it->second);
      return std::log(corpus) - std::log(std::max(1.0, df));
    };
    auto weights = [&](const NgramCounts& counts) {
      std::map<std::vector<std::string>, double> w;
      std::size_t total = 0;
      for (const auto& e : counts) total += e.second;
      for (const auto& [gram, count] : counts) {
        w[gram] = static_cast<double>(count) / static_cast<double>(total) * idf(gram);
      }
      return w;
    };
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      const auto vc = weights(ngrams(candidates[i], n));
      const auto vr = weights(ref_grams[i]);
      double dot = 0.0, nc = 0.0, nr = 0.0;
      for (const auto& [gram, w] : vc) {
        nc += w * w;
        if (auto it = vr.find(gram); it != vr.end()) dot += w * it->second;
      }
      for (const auto& e : vr) nr += e.second * e.second;
      if (nc > 0.0 && nr > 0.0) scores[i] += dot / (std::sqrt(nc) * std::sqrt(nr));
    }
  }
  for (double& s : scores) s /= static_cast<double>(n_max);
  return scores;
}

double cider(std::span<const Tokens> candidates, std::span<const Tokens> references, std::size_t n_max) {
  const auto per_pair = cider_per_pair(candidates, references, n_max);
  double total = 0.0;
  for (double s : per_pair) total += s;
  return total / static_cast<double>(per_pair.size());
}

RankResult make_rank_result(std::string query_id, std::vector<std::string> ranked,
                            const std::set<std::string>& relevant) {
  RankResult r{std::move(query_id), std::move(ranked), std::nullopt};
  for (std::size_t i = 0; i < r.candidates.size(); ++i) {
    if (relevant.count(r.candidates[i]) != 0) {
      r.first_relevant_rank = i + 1;
      break;
    }
  }
  return r;
}

double mrr(std::span<const RankResult> results) {
  if (results.empty()) throw DataError("MRR over no queries");
  double total = 0.0;
  for (const auto& r : results) {
    if (r.first_relevant_rank) total += 1.0 / static_cast<double>(*r.first_relevant_rank);
  }
  return total / static_cast<double>(results.size());
}

double ndcg(std::span<const RankResult> results, std::span<const std::set<std::string>> relevant, std::size_t k) {
  if (k == 0) throw ConfigError("nDCG cutoff must be at least 1");
  if (results.size() != relevant.size()) throw DataError("nDCG needs one relevant set per query");
  if (results.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t q = 0; q < results.size(); ++q) {
    const auto& rel = relevant[q];
    if (rel.empty()) continue;
    double dcg = 0.0;
    const auto& cands = results[q].candidates;
    for (std::size_t i = 0; i < std::min(k, cands.size()); ++i) {
      if (rel.count(cands[i]) != 0) dcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
    }
    double ideal = 0.0;
    for (std::size_t i = 0; i < std::min(k, rel.size()); ++i) ideal += 1.0 / std::log2(static_cast<double>(i) + 2.0);
    total += dcg / ideal;
  }
  return total / static_cast<double>(results.size());
}

double success_at_k(std::span<const RankResult> results, std::size_t k) {
  if (k == 0) throw ConfigError("SR@k cutoff must be at least 1");
  if (results.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& r : results) {
    if (r.first_relevant_rank && *r.first_relevant_rank <= k) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(results.size());
}

nlohmann::json MetricReport::to_json() const {
  nlohmann::json j;
  j["scores"] = scores;
  nlohmann::json display = nlohmann::json::object();
  for (const auto& [name, value] : scores) display[name] = value * 100.0;
  j["scores_x100"] = display;
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < per_example.size(); ++i) {
    nlohmann::json row = per_example[i];
    row["id"] = example_ids[i];
    rows.push_back(std::move(row));
  }
  j["per_example"] = std::move(rows);
  return j;
}

std::string MetricReport::per_example_tsv() const {
  std::ostringstream out;
  out.precision(6);
  out << "id";
  if (!per_example.empty()) {
    for (const auto& entry : per_example.front()) out << '\t' << entry.first;
  }
  out << '\n';
  for (std::size_t i = 0; i < per_example.size(); ++i) {
    out << example_ids[i];
    for (const auto& entry : per_example[i]) out << '\t' << entry.second;
    out << '\n';
  }
  return out.str();
}

MetricReport summarization_report(std::span<const std::string> ids, std::span<const Tokens> candidates,
                                  std::span<const Tokens> references) {
  check_corpus(candidates, references);
  if (ids.size() != candidates.size()) throw DataError("one id per example required");
  MetricReport report;
  for (std::size_t n = 1; n <= 4; ++n) report.scores["bleu" + std::to_string(n)] = bleu_n(candidates, references, n);
  const auto cider_scores = cider_per_pair(candidates, references);
  double meteor_total = 0.0, rouge_total = 0.0, cider_total = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const double m = meteor_lite(candidates[i], references[i]);
    const double r = rouge_l(candidates[i], references[i]);
    meteor_total += m;
    rouge_total += r;
    cider_total += cider_scores[i];
    report.example_ids.push_back(ids[i]);
    report.per_example.push_back({{"bleu1", candidates[i].empty() ? 0.0 : sentence_bleu(candidates[i], references[i], 1)},
                                  {"meteor", m},
                                  {"rouge_l", r},
                                  {"cider", cider_scores[i]}});
  }
  const double count = static_cast<double>(candidates.size());
  report.scores["meteor"] = meteor_total / count;
  report.scores["rouge_l"] = rouge_total / count;
  report.scores["cider"] = cider_total / count;
  return report;
}

MetricReport retrieval_report(std::span<const RankResult> results, std::span<const std::set<std::string>> relevant) {
  MetricReport report;
  report.scores["mrr"] = mrr(results);
  for (std::size_t k : {1, 5, 10}) {
    report.scores["sr@" + std::to_string(k)] = success_at_k(results, k);
    report.scores["ndcg@" + std::to_string(k)] = ndcg(results, relevant, k);
  }
  for (const auto& r : results) {
    report.example_ids.push_back(r.query_id);
    report.per_example.push_back(
        {{"rank", r.first_relevant_rank ? static_cast<double>(*r.first_relevant_rank) : 0.0},
         {"reciprocal_rank", r.first_relevant_rank ? 1.0 / static_cast<double>(*r.first_relevant_rank) : 0.0}});
  }
  return report;
}

}  // namespace ts3::metrics
