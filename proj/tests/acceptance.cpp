// Acceptance run: one PASS/FAIL line per criterion. Exit status 1 when a
// criterion fails that was not named with --expect-fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "CLI11.hpp"

#include "gradcheck.hpp"
#include "oracles.hpp"
#include "ts3/cli.hpp"
#include "ts3/encoder.hpp"
#include "ts3/indent_tree.hpp"
#include "ts3/metrics.hpp"
#include "ts3/search.hpp"
#include "ts3/trainer.hpp"

using namespace ts3;
namespace tn = ts3::tensor;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;
using metrics::Tokens;

namespace {

const std::string kData = TS3_TEST_DATA;
int g_failures = 0;
std::set<int> g_expected_failures;

void verdict(int id, bool pass, const std::string& detail) {
  const bool expected = g_expected_failures.count(id) > 0;
  if (!pass && !expected) ++g_failures;
  std::cout << "criterion " << id << ": " << (pass ? "PASS" : "FAIL") << (!pass && expected ? " (expected)" : "")
            << "  " << detail << std::endl;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fixed(double v, int digits = 4) {
  std::ostringstream s;
  s.precision(digits);
  s << std::fixed << v;
  return s.str();
}

void set_identity(Tensor t) {
  auto v = t.mutable_values();
  std::fill(v.begin(), v.end(), 0.0);
  for (std::size_t i = 0; i < std::min(t.rows(), t.cols()); ++i) v[i * t.cols() + i] = 1.0;
}

void criterion_attention() {
  // q1.k1 = 64 + 3*16 = 112, q1.k2 = 64 + 2*16 = 96; scaled by 1/8 -> 14 and 12.
  AttentionParams p;
  for (auto* v : {&p.query, &p.key, &p.value}) {
    v->push_back(Tensor::parameter(64, 64, std::vector<double>(64 * 64)));
    set_identity(v->back());
  }
  p.output = Tensor::parameter(64, 64, std::vector<double>(64 * 64));
  set_identity(p.output);
  std::vector<double> x(2 * 64, 0.0);
  x[0] = 8;
  x[1] = x[2] = x[3] = 4;
  x[64] = 8;
  x[65] = x[66] = 4;
  x[64 + 10] = 1;
  const Tensor X = Tensor::constant(2, 64, x);
  std::vector<Tensor> w;
  const Tensor z = self_attention(X, p, &w);
  const double w1 = w[0].at(0, 0);
  const double w2 = w[0].at(0, 1);
  double z_err = 0.0;
  for (std::size_t j = 0; j < 64; ++j) z_err = std::max(z_err, std::abs(z.at(0, j) - (0.88 * X.at(0, j) + 0.12 * X.at(1, j))));
  const bool ok = std::abs(w1 - 0.8808) <= 1e-3 && std::abs(w2 - 0.1192) <= 1e-3 && z_err <= 1e-2;
  verdict(1, ok, "weights (" + fixed(w1) + ", " + fixed(w2) + "), max |z1 - (0.88 v1 + 0.12 v2)| = " + fixed(z_err));
}

void criterion_gradients() {
  using namespace ts3::tensor;
  using ts3::testing::check_gradients;
  using ts3::testing::probe;
  using ts3::testing::random_param;
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::string worst_op;
  std::size_t ops = 0;
  auto check = [&](const std::string& name, const std::function<Tensor()>& f, std::vector<Tensor> in,
                   std::size_t max_coords = std::numeric_limits<std::size_t>::max()) {
    const auto r = check_gradients(f, std::move(in), 1e-5, max_coords);
    ++ops;
    if (r.worst >= worst) {
      worst = r.worst;
      worst_op = name;
    }
  };
  Tensor a = random_param(3, 4, 11);
  Tensor b = random_param(3, 4, 12);
  Tensor r = random_param(1, 4, 13);
  check("add", [&] { return probe(add(a, b)); }, {a, b});
  check("sub", [&] { return probe(sub(a, b)); }, {a, b});
  check("add_row", [&] { return probe(add_row(a, r)); }, {a, r});
  check("scale", [&] { return probe(scale(a, -2.5)); }, {a});
  check("square", [&] { return probe(square(a)); }, {a});
  check("tanh", [&] { return probe(tanh(a)); }, {a});
  check("transpose", [&] { return probe(transpose(a)); }, {a});
  check("mean_rows", [&] { return probe(mean_rows(a)); }, {a});
  check("sum", [&] { return sum(a); }, {a});
  check("row", [&] { return probe(row(a, 1)); }, {a});
  check("pick", [&] { return pick(a, 2, 3); }, {a});
  const std::vector<Tensor> parts{a, b};
  check("concat_cols", [&] { return probe(concat_cols(parts)); }, {a, b});
  check("concat_rows", [&] { return probe(concat_rows(parts)); }, {a, b});
  const std::vector<std::int32_t> ids{2, 0, 2};
  check("gather_rows", [&] { return probe(gather_rows(a, ids)); }, {a});
  auto rv = ts3::testing::random_values(12, 21, 0.1, 1.0);
  for (std::size_t i = 0; i < rv.size(); i += 2) rv[i] = -rv[i];
  Tensor k = Tensor::parameter(3, 4, rv);
  check("relu", [&] { return probe(relu(k)); }, {k});
  Tensor m1 = random_param(5, 4, 31);
  Tensor m2 = random_param(4, 3, 32);
  check("matmul", [&] { return probe(matmul(m1, m2)); }, {m1, m2});
  Tensor s = random_param(3, 7, 33, -3, 3);
  check("softmax_rows", [&] { return probe(softmax_rows(s)); }, {s});
  check("log_softmax_rows", [&] { return probe(log_softmax_rows(s)); }, {s});
  Tensor x = random_param(4, 6, 34);
  Tensor gain = random_param(1, 6, 35, 0.5, 1.5);
  Tensor bias = random_param(1, 6, 36);
  check("layer_norm", [&] { return probe(layer_norm(x, gain, bias)); }, {x, gain, bias});

  ModelConfig cfg;
  cfg.d_model = 8;
  cfg.heads = 2;
  cfg.layers = 1;
  cfg.d_ff = 16;
  cfg.max_steps = 8;
  cfg.precision = Precision::kF64;
  const PairSet pair(std::vector<CodeCommentPair>{{"p", "def f(a):\n    if a:\n        return a", "return a"}});
  Model model = Model::from_pairs(cfg, pair, 6);
  std::vector<Tensor> params;
  for (const auto& p : model.actor_params()) params.push_back(p.tensor);
  check("encoder-decoder mle step", [&] { return mle_loss(pair[0], model); }, params, 6);

  const double secs = seconds_since(t0);
  verdict(2, worst < 1e-4 && secs < 120.0,
          std::to_string(ops) + " checks, worst relative error " + fixed(worst, 8) + " (" + worst_op + "), " +
              fixed(secs, 1) + " s");
}

void criterion_metric_oracles() {
  std::mt19937 gen(2024);
  double worst = 0.0;
  int trials = 0;
  for (; trials < 150; ++trials) {
    const std::size_t pairs = 1 + gen() % 3;
    std::vector<Tokens> cands, refs;
    for (std::size_t i = 0; i < pairs; ++i) {
      cands.push_back(oracles::random_tokens(gen, 1, 9));
      refs.push_back(oracles::random_tokens(gen, 1, 9));
    }
    for (std::size_t n = 1; n <= 4; ++n) {
      worst = std::max(worst, std::abs(metrics::bleu_n(cands, refs, n) - oracles::oracle_bleu(cands, refs, n)));
    }
    worst = std::max(worst, std::abs(metrics::rouge_l(cands[0], refs[0]) - oracles::oracle_rouge(cands[0], refs[0], 1.2)));
    worst = std::max(worst, std::abs(metrics::cider(cands, refs) - oracles::oracle_cider(cands, refs)));
  }
  verdict(3, worst <= 1e-9, std::to_string(trials) + " random corpora, max |metric - oracle| = " + std::to_string(worst));
}

void criterion_reward() {
  RewardConfig two;
  two.n_max = 2;
  const double hand = bleu_reward({"the", "cat"}, {"the", "cat", "sat"}, two);
  bool in_range = true;
  bool self_one = true;
  std::mt19937 gen(7);
  for (int i = 0; i < 500; ++i) {
    RewardConfig cfg;
    cfg.n_max = 1 + gen() % 4;
    const Tokens c = oracles::random_tokens(gen, 1, 8);
    const Tokens ref = oracles::random_tokens(gen, 1, 8);
    const double v = bleu_reward(c, ref, cfg);
    in_range = in_range && v >= 0.0 && v <= 1.0;
    self_one = self_one && std::abs(bleu_reward(c, c, cfg) - 1.0) < 1e-12;
  }
  verdict(4, hand == 1.0 && in_range && self_one,
          "hand case r = " + fixed(hand, 12) + ", range ok: " + (in_range ? "yes" : "no") +
              ", r(c,c) = 1: " + (self_one ? "yes" : "no"));
}

void criterion_tree() {
  std::ifstream in(kData + "/dependency_targets.py");
  std::stringstream buf;
  buf << in.rdbuf();
  const IndentTree tree = build_tree(buf.str());
  const auto& root = tree.root();
  bool shape = root.children.size() == 4;
  std::string chain;
  for (NodeId c : root.children) {
    const auto& n = tree.node(c);
    if (n.statement.rfind("while", 0) != 0) continue;
    shape = shape && n.children.size() == 1;
    if (!shape) break;
    const auto& inner = tree.node(n.children[0]);
    shape = shape && inner.statement.rfind("if", 0) == 0 && inner.children.size() == 1 &&
            tree.node(inner.children[0]).statement == "continue" && tree.node(inner.children[0]).is_leaf();
    chain = "while -> if -> continue";
  }
  shape = shape && !chain.empty() && tree.size() == 7;
  const EncodePlan plan = postorder_schedule(tree);
  verdict(5, shape && plan.steps.size() == 3,
          "root children " + std::to_string(root.children.size()) + ", nodes " + std::to_string(tree.size()) +
              (chain.empty() ? "" : ", " + chain) + ", plan steps " + std::to_string(plan.steps.size()));
}

struct WindowStats {
  double mean = 0.0;
  double se = 0.0;  // standard error of the mean
};

std::vector<WindowStats> reward_windows(const std::vector<StepRecord>& steps, std::size_t width) {
  std::vector<double> rewards;
  for (const auto& s : steps) {
    if (s.phase == "joint") rewards.push_back(s.reward);
  }
  std::vector<WindowStats> out;
  for (std::size_t start = 0; start + width <= rewards.size(); start += width) {
    const auto first = rewards.begin() + static_cast<long>(start);
    const double mean = std::accumulate(first, first + static_cast<long>(width), 0.0) / static_cast<double>(width);
    double var = 0.0;
    for (auto it = first; it != first + static_cast<long>(width); ++it) var += (*it - mean) * (*it - mean);
    var /= static_cast<double>(width - 1);
    out.push_back({mean, std::sqrt(var / static_cast<double>(width))});
  }
  return out;
}

void criterion_search(const Model& model, const PairSet& pairs) {
  std::vector<Snippet> snippets;
  std::vector<LabeledQuery> queries;
  for (const auto& p : pairs) snippets.push_back({p.id, p.code});
  const SearchIndex index = build_index(snippets, model);
  for (const auto& p : pairs) queries.push_back({p.id, encode_query(p.comment, model), p.id});
  const BetaTuning tuned = tune_beta(queries, index);
  const double mrr0 = metrics::mrr(rank_queries(queries, index, 0.0));
  const double mrr1 = metrics::mrr(rank_queries(queries, index, 1.0));

  bool code_only = true;
  for (const auto& q : queries) {
    std::vector<std::pair<std::string, double>> manual;
    for (const auto& e : index.entries()) manual.emplace_back(e.id, cosine(q.vec, e.code_vec));
    std::sort(manual.begin(), manual.end(), [](const auto& x, const auto& y) {
      return x.second != y.second ? x.second > y.second : x.first < y.first;
    });
    code_only = code_only && rank(q.vec, index, SearchConfig{1.0, index.size()}).hits == manual;
  }
  const bool ok = index.size() == pairs.size() && tuned.mrr >= 0.9 && code_only && tuned.mrr >= std::max(mrr0, mrr1);
  verdict(8, ok,
          "MRR(beta*=" + fixed(tuned.beta, 2) + ") = " + fixed(tuned.mrr) + ", MRR(0) = " + fixed(mrr0) +
              ", MRR(1) = " + fixed(mrr1) + ", beta=1 equals code-only cosine: " + (code_only ? "yes" : "no"));
}

void criteria_training() {
  const PairSet toy = load_corpus(kData + "/toy_corpus.jsonl");
  TrainConfig cfg;
  cfg.model.d_model = 64;
  cfg.model.layers = 2;
  cfg.model.heads = 2;
  cfg.model.max_steps = 30;
  cfg.mle_steps = 2000;
  cfg.critic_steps = 500;
  cfg.joint_steps = 3000;
  cfg.seed = 1;
  Model model = Model::from_pairs(cfg.model, toy, cfg.seed);
  const auto t0 = Clock::now();
  // Overfit regime: the 16 pairs serve as both training and validation data.
  const TrainResult result = train(model, toy, toy, cfg);
  const double secs = seconds_since(t0);

  verdict(6, result.mle_val_bleu1 >= 0.95 && secs < 600.0,
          "BLEU-1 after " + std::to_string(cfg.mle_steps) + " MLE steps = " + fixed(result.mle_val_bleu1) +
              ", full three-phase run " + fixed(secs, 1) + " s");

  const auto windows = reward_windows(result.steps, 500);
  bool strict = true;
  bool within_noise = true;
  std::string trace;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    trace += (i ? " " : "") + fixed(windows[i].mean);
    if (i == 0) continue;
    const double drop = windows[i - 1].mean - windows[i].mean;
    const double noise = 2.0 * std::hypot(windows[i - 1].se, windows[i].se);
    strict = strict && drop <= 0.0;
    within_noise = within_noise && drop <= noise;
  }
  const bool bleu_ok = result.final_val_bleu1 >= result.mle_val_bleu1;
  verdict(7, bleu_ok && within_noise && windows.size() == 6,
          "val BLEU-1 mle " + fixed(result.mle_val_bleu1) + " -> joint " + fixed(result.final_val_bleu1) +
              "; 500-step reward means [" + trace + "]; strictly non-decreasing: " + (strict ? "yes" : "no") +
              ", non-decreasing within 2 SE: " + (within_noise ? "yes" : "no"));

  criterion_search(model, toy);
}

void criterion_retrieval_units() {
  auto at_rank = [](std::size_t rank) {
    std::vector<std::string> ids;
    for (std::size_t i = 1; i <= 10; ++i) ids.push_back(i == rank ? "hit" : "x" + std::to_string(i));
    return metrics::make_rank_result("q" + std::to_string(rank), ids, {"hit"});
  };
  const std::vector<metrics::RankResult> three{at_rank(1), at_rank(2), at_rank(4)};
  const double mrr = metrics::mrr(three);
  const std::vector<metrics::RankResult> one{at_rank(2)};
  const std::vector<std::set<std::string>> rel{{"hit"}};
  const double ndcg = metrics::ndcg(one, rel, 10);
  const std::vector<metrics::RankResult> sr{at_rank(1), at_rank(6), at_rank(3)};
  const double sr5 = metrics::success_at_k(sr, 5);
  verdict(9, std::abs(mrr - 0.5833) <= 1e-4 && std::abs(ndcg - 0.6309) <= 1e-4 && sr5 == 2.0 / 3.0,
          "MRR = " + fixed(mrr) + ", nDCG@10 = " + fixed(ndcg) + ", SR@5 = " + fixed(sr5, 6));
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void criterion_determinism() {
  const fs::path root = fs::temp_directory_path() / "ts3_acceptance_determinism";
  fs::remove_all(root);
  fs::create_directories(root);
  std::ofstream(root / "small.cfg") << "d_model = 16\nheads = 2\nlayers = 1\nT = 10\nmle_steps = 60\n"
                                       "critic_steps = 20\njoint_steps = 40\nbatch_size = 4\neval_every = 20\n";
  for (const char* run : {"a", "b"}) {
    const std::string out = (root / run).string();
    const std::string config = (root / "small.cfg").string();
    const std::string corpus = kData + "/toy_corpus.jsonl";
    const char* argv[] = {"ts3", "train", "--corpus", corpus.c_str(), "--out", out.c_str(), "--config",
                          config.c_str(), "--seed", "7"};
    std::ostringstream sink, err;
    if (run_cli(10, argv, sink, err) != kExitOk) {
      verdict(10, false, "train failed: " + err.str());
      return;
    }
  }
  const std::vector<std::string> files{"losses.tsv", "metrics.jsonl", "checkpoint/weights.ts3w", "checkpoint/meta.json",
                                       "checkpoint_mle/weights.ts3w"};
  bool same = true;
  std::string differing;
  for (const auto& f : files) {
    const std::string a = slurp(root / "a" / f);
    if (a.empty() || a != slurp(root / "b" / f)) {
      same = false;
      differing += " " + f;
    }
  }
  fs::remove_all(root);
  verdict(10, same, same ? "two seeded train runs: loss logs and checkpoints byte-identical"
                         : "files differ or missing:" + differing);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app("ts3 acceptance criteria");
  std::vector<int> expect_fail;
  app.add_option("--expect-fail", expect_fail, "Criteria known not to hold; reported but not fatal");
  CLI11_PARSE(app, argc, argv);
  g_expected_failures.insert(expect_fail.begin(), expect_fail.end());
  spdlog::set_level(spdlog::level::warn);
  const auto t0 = Clock::now();
  const std::vector<std::function<void()>> steps{criterion_attention, criterion_gradients, criterion_metric_oracles,
                                                 criterion_reward, criterion_tree, criteria_training,
                                                 criterion_retrieval_units, criterion_determinism};
  for (const auto& step : steps) {
    try {
      step();
    } catch (const std::exception& e) {
      ++g_failures;
      std::cout << "criterion check aborted: FAIL  " << e.what() << std::endl;
    }
  }
  std::cout << "acceptance finished in " << fixed(seconds_since(t0), 1) << " s, " << g_failures << " unexpected failures"
            << std::endl;
  return g_failures == 0 ? 0 : 1;
}
