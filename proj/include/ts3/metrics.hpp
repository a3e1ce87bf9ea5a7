#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace ts3::metrics {

using Tokens = std::vector<std::string>;

/// Corpus BLEU over orders 1..n: clipped n-gram matches and candidate
/// n-gram counts are summed over the corpus, combined by geometric mean and
/// scaled by the brevity penalty exp(1 - R/C) when C < R. Orders for which
/// no candidate has enough tokens are left out of the mean. Throws
/// DataError on empty or unequal lists.
double bleu_n(std::span<const Tokens> candidates, std::span<const Tokens> references, std::size_t n);

// Single-pair BLEU (the one-element corpus).
double sentence_bleu(const Tokens& candidate, const Tokens& reference, std::size_t n);

// LCS F-measure with recall weight beta. Empty input scores 0.
double rouge_l(const Tokens& candidate, const Tokens& reference, double beta = 1.2);

/// Exact-match METEOR: unigrams align occurrence by occurrence in order,
/// F_mean = 10PR / (R + 9P), penalty = 0.5 (chunks / matches)^3.
double meteor_lite(const Tokens& candidate, const Tokens& reference);

/// Mean over pairs and orders 1..n_max of the cosine between tf-idf n-gram
/// vectors of candidate and reference, idf taken over the reference corpus.
/// The conventional x10 scale is divided back out, so the result is in
/// [0, 1]. With a single pair every idf is zero and the score is 0.
double cider(std::span<const Tokens> candidates, std::span<const Tokens> references, std::size_t n_max = 4);
std::vector<double> cider_per_pair(std::span<const Tokens> candidates, std::span<const Tokens> references,
                                   std::size_t n_max = 4);

struct RankResult {
  std::string query_id;
  std::vector<std::string> candidates;  // ranked, best first
  std::optional<std::size_t> first_relevant_rank;  // 1-based
};

// Builds a RankResult, locating the first candidate in `relevant`.
RankResult make_rank_result(std::string query_id, std::vector<std::string> ranked,
                            const std::set<std::string>& relevant);

double mrr(std::span<const RankResult> results);
double ndcg(std::span<const RankResult> results, std::span<const std::set<std::string>> relevant, std::size_t k);
double success_at_k(std::span<const RankResult> results, std::size_t k);

struct MetricReport {
  std::map<std::string, double> scores;  // each in [0, 1]
  std::vector<std::string> example_ids;
  std::vector<std::map<std::string, double>> per_example;

  nlohmann::json to_json() const;
  std::string per_example_tsv() const;
};

MetricReport summarization_report(std::span<const std::string> ids, std::span<const Tokens> candidates,
                                  std::span<const Tokens> references);

MetricReport retrieval_report(std::span<const RankResult> results, std::span<const std::set<std::string>> relevant);

}  // namespace ts3::metrics
