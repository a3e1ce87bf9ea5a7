#include "ts3/cli.hpp"

#include <CLI11.hpp>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

#include "ts3/corpus.hpp"
#include "ts3/error.hpp"
#include "ts3/indent_tree.hpp"
#include "ts3/log.hpp"
#include "ts3/metrics.hpp"
#include "ts3/model.hpp"
#include "ts3/search.hpp"
#include "ts3/trainer.hpp"

namespace ts3 {
namespace {

namespace fs = std::filesystem;

struct RunConfig {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::string query;
  std::size_t k = 10;
  std::optional<double> beta;
  std::string checkpoint;
  std::string corpus;
  std::string index_dir;
  std::string input;  // positional file or text
  std::string tsv_path;
  bool natural_language = false;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

TrainConfig train_config(const RunConfig& rc) {
  TrainConfig cfg;
  if (!rc.config_path.empty()) cfg.load_file(rc.config_path);
  if (rc.seed) cfg.seed = *rc.seed;
  return cfg;
}

std::vector<LabeledQuery> corpus_queries(const PairSet& pairs, const Model& model, const SearchIndex& index) {
  std::vector<LabeledQuery> queries;
  for (const auto& p : pairs) {
    if (index.find(p.id) == nullptr) continue;
    queries.push_back({p.id, encode_query(p.comment, model), p.id});
  }
  return queries;
}

int cmd_ingest(const RunConfig& rc, std::ostream& out) {
  const PairSet pairs = load_corpus(rc.corpus);
  const CorpusSplit split = split_corpus(pairs, rc.seed.value_or(1));
  nlohmann::json summary{{"pairs", pairs.size()},
                         {"train", split.train.size()},
                         {"val", split.val.size()},
                         {"test", split.test.size()}};
  if (!rc.out_dir.empty()) write_file(fs::path(rc.out_dir) / "split.json", split_manifest(split).dump(1) + "\n");
  out << summary.dump() << '\n';
  return kExitOk;
}

int cmd_train(const RunConfig& rc, std::ostream& out) {
  const TrainConfig cfg = train_config(rc);
  const PairSet pairs = load_corpus(rc.corpus);
  const CorpusSplit split = split_corpus(pairs, cfg.seed);
  const fs::path dir(rc.out_dir);
  fs::create_directories(dir);
  write_file(dir / "split.json", split_manifest(split).dump(1) + "\n");
  write_file(dir / "config.json", cfg.to_json().dump(1) + "\n");
  Model model = Model::from_pairs(cfg.model, split.train, cfg.seed);
  const TrainResult result = train(model, split.train, split.val, cfg, dir);
  out << nlohmann::json{{"mle_val_bleu1", result.mle_val_bleu1},
                        {"final_val_bleu1", result.final_val_bleu1},
                        {"best_val_bleu1", result.best_val_bleu1},
                        {"checkpoint", (dir / "checkpoint").string()}}
             .dump()
      << '\n';
  return kExitOk;
}

int cmd_summarize(const RunConfig& rc, std::ostream& out) {
  const Model model = Model::load(rc.checkpoint);
  out << model.summarize(read_file(rc.input)) << '\n';
  return kExitOk;
}

int cmd_index(const RunConfig& rc, std::ostream& out) {
  const Model model = Model::load(rc.checkpoint);
  const PairSet pairs = load_corpus(rc.corpus);
  std::vector<Snippet> snippets;
  for (const auto& p : pairs) snippets.push_back({p.id, p.code});
  SearchIndex index = build_index(snippets, model);
  if (index.empty()) throw DataError("no snippet could be indexed");
  nlohmann::json summary{{"indexed", index.size()}, {"skipped", index.skipped().size()}};
  if (rc.beta) {
    index.set_beta(*rc.beta);
  } else {
    // Tune on the validation split's queries when the corpus can be split.
    const PairSet tuning = pairs.size() >= 5 ? split_corpus(pairs, rc.seed.value_or(1)).val : pairs;
    const auto queries = corpus_queries(tuning, model, index);
    if (!queries.empty()) {
      const BetaTuning tuned = tune_beta(queries, index);
      index.set_beta(tuned.beta);
      summary["tuning_mrr"] = tuned.mrr;
    }
  }
  summary["beta"] = index.beta();
  index.save(rc.out_dir);
  out << summary.dump() << '\n';
  return kExitOk;
}

int cmd_search(const RunConfig& rc, std::ostream& out) {
  const Model model = Model::load(rc.checkpoint);
  const SearchIndex index = SearchIndex::load(rc.index_dir);
  const SearchConfig cfg{rc.beta.value_or(index.beta()), rc.k};
  const auto hits = rank(encode_query(rc.query, model), index, cfg).hits;
  for (std::size_t i = 0; i < hits.size(); ++i) {
    const IndexEntry* e = index.find(hits[i].first);
    std::string first_line = e->code.substr(0, e->code.find('\n'));
    out << (i + 1) << '\t' << std::fixed << std::setprecision(4) << hits[i].second << '\t' << hits[i].first << '\t'
        << first_line << '\n';
  }
  return kExitOk;
}

int cmd_eval_sum(const RunConfig& rc, std::ostream& out) {
  const Model model = Model::load(rc.checkpoint);
  const PairSet pairs = load_corpus(rc.corpus);
  std::vector<std::string> ids;
  std::vector<metrics::Tokens> candidates, references;
  for (const auto& p : pairs) {
    ids.push_back(p.id);
    candidates.push_back(model.summarize_tokens(p.code));
    references.push_back(tokenize_nl(p.comment).tokens);
  }
  const auto report = metrics::summarization_report(ids, candidates, references);
  nlohmann::json j = report.to_json();
  j["kind"] = "summarization";
  if (!rc.out_dir.empty()) write_file(fs::path(rc.out_dir) / "eval_sum.json", j.dump(1) + "\n");
  if (!rc.tsv_path.empty()) write_file(rc.tsv_path, report.per_example_tsv());
  out << j.dump() << '\n';
  return kExitOk;
}

int cmd_eval_search(const RunConfig& rc, std::ostream& out) {
  const Model model = Model::load(rc.checkpoint);
  const SearchIndex index = SearchIndex::load(rc.index_dir);
  const PairSet pairs = load_corpus(rc.corpus);
  const auto queries = corpus_queries(pairs, model, index);
  if (queries.empty()) throw DataError("no corpus query has its snippet in the index");
  const double beta = rc.beta.value_or(index.beta());
  const auto results = rank_queries(queries, index, beta);
  std::vector<std::set<std::string>> relevant;
  for (const auto& q : queries) relevant.push_back({q.relevant_id});
  const auto report = metrics::retrieval_report(results, relevant);
  nlohmann::json j = report.to_json();
  j["kind"] = "search";
  j["beta"] = beta;
  j["pairwise_satisfaction"] = pairwise_satisfaction(queries, index, beta);
  if (!rc.out_dir.empty()) write_file(fs::path(rc.out_dir) / "eval_search.json", j.dump(1) + "\n");
  if (!rc.tsv_path.empty()) write_file(rc.tsv_path, report.per_example_tsv());
  out << j.dump() << '\n';
  return kExitOk;
}

int cmd_tokenize(const RunConfig& rc, std::ostream& out) {
  const TokenSeq seq = rc.natural_language ? tokenize_nl(rc.input) : tokenize_code(rc.input);
  for (const auto& t : seq.tokens) out << t << '\n';
  return kExitOk;
}

int cmd_tree(const RunConfig& rc, std::ostream& out) {
  out << build_tree(read_file(rc.input)).debug_string();
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Tree-transformer code summarization and comment-augmented code search"};
  app.require_subcommand(1);
  RunConfig rc;

  auto add_seed = [&](CLI::App* c) { c->add_option("--seed", rc.seed, "Random seed"); };
  auto add_config = [&](CLI::App* c) { c->add_option("--config", rc.config_path, "key = value config file")->check(CLI::ExistingFile); };

  auto* ingest = app.add_subcommand("ingest", "Validate a JSONL corpus and write its 60/20/20 split");
  ingest->add_option("--corpus", rc.corpus, "JSONL corpus")->required();
  ingest->add_option("--out", rc.out_dir, "Directory receiving split.json");
  add_seed(ingest);
  add_config(ingest);

  auto* train_cmd = app.add_subcommand("train", "Three-phase actor-critic training");
  train_cmd->add_option("--corpus", rc.corpus, "JSONL corpus")->required();
  train_cmd->add_option("--out", rc.out_dir, "Output directory")->required();
  add_seed(train_cmd);
  add_config(train_cmd);

  auto* summarize = app.add_subcommand("summarize", "Generate a comment for a code file");
  summarize->add_option("file", rc.input, "Source file holding one function")->required();
  summarize->add_option("--checkpoint", rc.checkpoint, "Model directory")->required();

  auto* index = app.add_subcommand("index", "Build a search index over a corpus");
  index->add_option("--corpus", rc.corpus, "JSONL corpus of snippets")->required();
  index->add_option("--checkpoint", rc.checkpoint, "Model directory")->required();
  index->add_option("--out", rc.out_dir, "Index directory")->required();
  index->add_option("--beta", rc.beta, "Fixed beta instead of tuning")->check(CLI::Range(0.0, 1.0));
  add_seed(index);

  auto* search = app.add_subcommand("search", "Rank indexed snippets for a query");
  search->add_option("--query", rc.query, "Natural-language query")->required();
  search->add_option("--checkpoint", rc.checkpoint, "Model directory")->required();
  search->add_option("--index", rc.index_dir, "Index directory")->required();
  search->add_option("--k", rc.k, "Results to print")->check(CLI::PositiveNumber);
  search->add_option("--beta", rc.beta, "Override the index beta")->check(CLI::Range(0.0, 1.0));

  auto* eval_sum = app.add_subcommand("eval-sum", "Summarization metrics over a corpus");
  eval_sum->add_option("--checkpoint", rc.checkpoint, "Model directory")->required();
  eval_sum->add_option("--corpus", rc.corpus, "JSONL corpus")->required();
  eval_sum->add_option("--out", rc.out_dir, "Directory receiving eval_sum.json");
  eval_sum->add_option("--tsv", rc.tsv_path, "Per-example TSV breakdown");

  auto* eval_search = app.add_subcommand("eval-search", "Retrieval metrics with corpus comments as queries");
  eval_search->add_option("--checkpoint", rc.checkpoint, "Model directory")->required();
  eval_search->add_option("--index", rc.index_dir, "Index directory")->required();
  eval_search->add_option("--corpus", rc.corpus, "JSONL corpus")->required();
  eval_search->add_option("--beta", rc.beta, "Override the index beta")->check(CLI::Range(0.0, 1.0));
  eval_search->add_option("--out", rc.out_dir, "Directory receiving eval_search.json");
  eval_search->add_option("--tsv", rc.tsv_path, "Per-query TSV breakdown");

  auto* tokenize = app.add_subcommand("tokenize", "Print one token per line");
  tokenize->add_option("text", rc.input, "Text to tokenize")->required();
  tokenize->add_flag("--nl", rc.natural_language, "Use the natural-language tokenizer");

  auto* tree = app.add_subcommand("tree", "Print the indent tree of a code file");
  tree->add_option("file", rc.input, "Source file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    const auto* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    err << sub->help();
    return kExitUsage;
  }

  if (!log::init_from_env()) {
    err << "error: TS3_LOG_LEVEL must be error, info or debug\n";
    return kExitUsage;
  }

  try {
    if (ingest->parsed()) return cmd_ingest(rc, out);
    if (train_cmd->parsed()) return cmd_train(rc, out);
    if (summarize->parsed()) return cmd_summarize(rc, out);
    if (index->parsed()) return cmd_index(rc, out);
    if (search->parsed()) return cmd_search(rc, out);
    if (eval_sum->parsed()) return cmd_eval_sum(rc, out);
    if (eval_search->parsed()) return cmd_eval_search(rc, out);
    if (tokenize->parsed()) return cmd_tokenize(rc, out);
    if (tree->parsed()) return cmd_tree(rc, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace ts3
