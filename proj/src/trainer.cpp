#include "ts3/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>

#include "ts3/error.hpp"
#include "ts3/log.hpp"

namespace ts3 {
namespace {

namespace tn = ts3::tensor;

Tensor sum_all(const std::vector<Tensor>& scalars) {
  return scalars.size() == 1 ? scalars.front() : tn::sum(tn::concat_cols(scalars));
}

std::map<std::vector<std::string>, std::size_t> count_ngrams(const metrics::Tokens& t, std::size_t n) {
  std::map<std::vector<std::string>, std::size_t> out;
  for (std::size_t i = 0; i + n <= t.size(); ++i) {
    ++out[{t.begin() + static_cast<std::ptrdiff_t>(i), t.begin() + static_cast<std::ptrdiff_t>(i + n)}];
  }
  return out;
}

std::size_t parse_size(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(value, &used);
    if (used != value.size() || v < 0) throw std::invalid_argument(value);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + " expects a non-negative integer, got '" + value + "'");
  }
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + " expects a number, got '" + value + "'");
  }
}

std::string trim_copy(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

// Cycles through a freshly shuffled order of the training pairs.
class BatchSampler {
 public:
  BatchSampler(std::size_t n, std::uint64_t seed) : order_(n), rng_(seed) {
    for (std::size_t i = 0; i < n; ++i) order_[i] = i;
    rng_.shuffle(order_.begin(), order_.end());
  }

  std::vector<std::size_t> next(std::size_t batch) {
    std::vector<std::size_t> out;
    while (out.size() < batch) {
      if (pos_ == order_.size()) {
        rng_.shuffle(order_.begin(), order_.end());
        pos_ = 0;
      }
      out.push_back(order_[pos_++]);
    }
    return out;
  }

 private:
  std::vector<std::size_t> order_;
  Rng rng_;
  std::size_t pos_ = 0;
};

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void RewardConfig::validate() const {
  if (n_max < 1 || n_max > 4) throw ConfigError("reward n_max must be within 1..4");
  if (!(epsilon > 0.0)) throw ConfigError("reward epsilon must be positive");
}

double bleu_reward(const metrics::Tokens& candidate, const metrics::Tokens& reference, const RewardConfig& cfg) {
  cfg.validate();
  if (reference.empty()) throw DataError("reward needs a non-empty reference");
  if (candidate.empty()) return 0.0;
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= cfg.n_max; ++n) {
    const auto c = count_ngrams(candidate, n);
    const auto r = count_ngrams(reference, n);
    double matched = 0.0;
    double total = 0.0;
    for (const auto& [gram, count] : c) {
      total += static_cast<double>(count);
      if (auto it = r.find(gram); it != r.end()) matched += static_cast<double>(std::min(count, it->second));
    }
    if (matched == 0.0 || total == 0.0) {
      matched += cfg.epsilon;
      total += cfg.epsilon;
    }
    log_sum += std::log(matched / total);
  }
  return std::exp(log_sum / static_cast<double>(cfg.n_max));
}

Tensor critic_value(const DecodeState& state, const CriticParams& critic) {
  return tn::add(tn::matmul(state.hidden.detach(), critic.weight), critic.bias);
}

Tensor mle_loss(const CodeCommentPair& pair, const Model& model) {
  const Tensor code = model.encode_code(pair.code).pooled;
  std::vector<TokenId> targets = encode_ids(tokenize_nl(pair.comment), model.comment_vocab());
  targets.push_back(Vocab::kEos);
  const DecoderView view = model.decoder_view();
  DecodeState state = init_state(code, model.decoder());
  std::vector<Tensor> terms;
  terms.reserve(targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const Tensor logp = next_log_distribution(state, model.decoder().output);
    terms.push_back(tn::pick(logp, 0, static_cast<std::size_t>(targets[i])));
    if (i + 1 < targets.size()) state = advance(state, targets[i], view);
  }
  return tn::scale(sum_all(terms), -1.0 / static_cast<double>(targets.size()));
}

Trajectory sample_trajectory(const Model& model, const CodeCommentPair& pair, std::size_t max_steps,
                             double temperature, Rng& rng, bool actor_grad) {
  if (max_steps == 0) throw ConfigError("max_steps must be at least 1");
  std::optional<tn::NoGradGuard> actor_off;
  auto actor_tape = [&](bool on) {
    if (actor_grad) return;
    if (on) {
      actor_off.reset();
    } else {
      actor_off.emplace();
    }
  };
  const DecoderView view = model.decoder_view();
  Trajectory traj;
  actor_tape(false);
  DecodeState state = init_state(model.encode_code(pair.code).pooled, model.decoder());
  for (std::size_t t = 0; t < max_steps; ++t) {
    const Tensor logp =
        tn::log_softmax_rows(tn::scale(next_logits(state, model.decoder().output), 1.0 / temperature));
    std::vector<double> probs(logp.values().begin(), logp.values().end());
    for (double& p : probs) p = std::exp(p);
    const auto token = static_cast<TokenId>(sample_index(probs, rng));
    traj.log_probs.push_back(tn::pick(logp, 0, static_cast<std::size_t>(token)));
    actor_tape(true);
    traj.values.push_back(critic_value(state, model.critic()));
    actor_tape(false);
    traj.actions.push_back(token);
    if (token == Vocab::kEos) break;
    if (t + 1 < max_steps) state = advance(state, token, view);
  }
  actor_tape(true);
  std::vector<TokenId> words(traj.actions.begin(), traj.actions.end());
  if (!words.empty() && words.back() == Vocab::kEos) words.pop_back();
  traj.candidate = decode_ids(words, model.comment_vocab());
  return traj;
}

Tensor actor_loss(std::span<const Tensor> log_probs, double reward, std::span<const Tensor> values) {
  if (log_probs.empty()) throw DataError("actor loss over an empty trajectory");
  if (values.size() != log_probs.size()) throw ShapeError("one value estimate per step required");
  std::vector<Tensor> terms;
  terms.reserve(log_probs.size());
  for (std::size_t t = 0; t < log_probs.size(); ++t) {
    const double advantage = reward - values[t].item();
    terms.push_back(tn::scale(log_probs[t], -advantage));
  }
  return sum_all(terms);
}

Tensor critic_loss(std::span<const Tensor> values, double target) {
  if (values.empty()) throw DataError("critic loss over an empty trajectory");
  std::vector<Tensor> terms;
  terms.reserve(values.size());
  const Tensor r = Tensor::constant(1, 1, {target});
  for (const auto& v : values) terms.push_back(tn::square(tn::sub(v, r)));
  return tn::scale(sum_all(terms), 0.5 / static_cast<double>(values.size()));
}

void TrainConfig::set(const std::string& key, const std::string& value) {
  if (key == "d_model") model.d_model = parse_size(key, value);
  else if (key == "heads") model.heads = parse_size(key, value);
  else if (key == "layers") model.layers = parse_size(key, value);
  else if (key == "d_ff") model.d_ff = parse_size(key, value);
  else if (key == "max_positions") model.max_positions = parse_size(key, value);
  else if (key == "T" || key == "max_steps") model.max_steps = parse_size(key, value);
  else if (key == "code_vocab_max") model.code_vocab_max = parse_size(key, value);
  else if (key == "comment_vocab_max") model.comment_vocab_max = parse_size(key, value);
  else if (key == "min_freq") model.min_freq = parse_size(key, value);
  else if (key == "precision") {
    if (value == "f32") model.precision = tn::Precision::kF32;
    else if (value == "f64") model.precision = tn::Precision::kF64;
    else throw ConfigError("precision must be f32 or f64, got '" + value + "'");
  }
  else if (key == "lr") learning_rate = parse_double(key, value);
  else if (key == "joint_lr") joint_learning_rate = parse_double(key, value);
  else if (key == "adagrad_epsilon") adagrad_epsilon = parse_double(key, value);
  else if (key == "mle_steps") mle_steps = parse_size(key, value);
  else if (key == "critic_steps") critic_steps = parse_size(key, value);
  else if (key == "joint_steps") joint_steps = parse_size(key, value);
  else if (key == "batch_size") batch_size = parse_size(key, value);
  else if (key == "eval_every") eval_every = parse_size(key, value);
  else if (key == "temperature") temperature = parse_double(key, value);
  else if (key == "n_max") reward.n_max = parse_size(key, value);
  else if (key == "reward_epsilon") reward.epsilon = parse_double(key, value);
  else if (key == "seed") seed = parse_size(key, value);
  else throw ConfigError("unknown config key: " + key);
}

void TrainConfig::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim_copy(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": expected key = value");
    }
    set(trim_copy(line.substr(0, eq)), trim_copy(line.substr(eq + 1)));
  }
}

nlohmann::json TrainConfig::to_json() const {
  return {{"model", model.to_json()},      {"lr", learning_rate}, {"joint_lr", joint_learning_rate},         {"adagrad_epsilon", adagrad_epsilon},
          {"mle_steps", mle_steps},        {"critic_steps", critic_steps}, {"joint_steps", joint_steps},
          {"batch_size", batch_size},      {"eval_every", eval_every},     {"temperature", temperature},
          {"n_max", reward.n_max},         {"reward_epsilon", reward.epsilon}, {"seed", seed}};
}

double validation_bleu1(const Model& model, const PairSet& pairs) {
  if (pairs.empty()) throw DataError("validation split is empty");
  tn::NoGradGuard no_grad;
  std::vector<metrics::Tokens> candidates, references;
  for (const auto& p : pairs) {
    candidates.push_back(model.summarize_tokens(p.code));
    references.push_back(tokenize_nl(p.comment).tokens);
  }
  return metrics::bleu_n(candidates, references, 1);
}

TrainResult train(Model& model, const PairSet& train_pairs, const PairSet& val_pairs, const TrainConfig& cfg,
                  const std::filesystem::path& out_dir) {
  if (train_pairs.empty()) throw DataError("training split is empty");
  if (val_pairs.empty()) throw DataError("validation split is empty");
  if (cfg.batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(cfg.temperature > 0.0)) throw ConfigError("temperature must be positive");
  if (!(cfg.learning_rate > 0.0) || !(cfg.joint_learning_rate > 0.0)) throw ConfigError("learning rates must be positive");
  cfg.reward.validate();

  const bool persist = !out_dir.empty();
  std::ofstream loss_log, metric_log;
  if (persist) {
    std::filesystem::create_directories(out_dir);
    loss_log.open(out_dir / "losses.tsv", std::ios::trunc);
    metric_log.open(out_dir / "metrics.jsonl", std::ios::trunc);
    loss_log << "phase\tstep\tloss\treward\n";
  }

  TrainResult result;
  tn::OptimState optim{cfg.learning_rate, cfg.adagrad_epsilon, {}};
  auto actor = model.actor_params();
  auto critic = model.critic_params();
  auto all = model.all_params();
  BatchSampler sampler(train_pairs.size(), cfg.seed * 0x9E3779B97F4A7C15ULL + 1);
  Rng sample_rng(cfg.seed * 0x9E3779B97F4A7C15ULL + 2);
  const double inv_batch = 1.0 / static_cast<double>(cfg.batch_size);
  std::vector<metrics::Tokens> references;
  for (const auto& p : train_pairs) references.push_back(tokenize_nl(p.comment).tokens);

  auto record_step = [&](const char* phase, std::size_t step, double loss, double reward) {
    result.steps.push_back({phase, step, loss, reward});
    if (persist) loss_log << phase << '\t' << step << '\t' << fmt_double(loss) << '\t' << fmt_double(reward) << '\n';
  };
  auto validate = [&](const char* phase, std::size_t step) {
    const double v = validation_bleu1(model, val_pairs);
    result.validations.push_back({phase, step, v});
    if (persist) metric_log << nlohmann::json{{"phase", phase}, {"step", step}, {"val_bleu1", v}}.dump() << '\n';
    spdlog::info("{} step {}: validation BLEU-1 {:.4f}", phase, step, v);
    return v;
  };
  auto due = [&](std::size_t step, std::size_t total) {
    return step == total || (cfg.eval_every > 0 && step % cfg.eval_every == 0);
  };
  auto guarded = [](const char* phase, std::size_t step, auto&& body) {
    try {
      body();
    } catch (const NumericError& e) {
      throw NumericError(std::string(phase) + " step " + std::to_string(step) + ": " + e.what());
    }
  };

  // Actor MLE pretraining.
  double best = -1.0;
  ParamSnapshot best_params;
  for (std::size_t step = 1; step <= cfg.mle_steps; ++step) {
    guarded("mle", step, [&] {
      std::vector<Tensor> losses;
      for (std::size_t i : sampler.next(cfg.batch_size)) losses.push_back(mle_loss(train_pairs[i], model));
      const Tensor total = tn::scale(sum_all(losses), inv_batch);
      tn::backward(total);
      tn::adagrad_step(actor, optim, cfg.model.precision);
      tn::zero_grads(actor);
      record_step("mle", step, total.item(), 0.0);
    });
    if (due(step, cfg.mle_steps)) {
      const double v = validate("mle", step);
      // Ties go to the later, better-converged iterate.
      if (v >= best) {
        best = v;
        best_params = model.snapshot();
      }
    }
  }
  if (best_params.empty()) {
    best = validate("mle", 0);
  } else {
    model.restore(best_params);
  }
  result.mle_val_bleu1 = best;
  best_params = model.snapshot();
  if (persist) model.save(out_dir / "checkpoint_mle");

  // Critic pretraining against the frozen actor.
  for (std::size_t step = 1; step <= cfg.critic_steps; ++step) {
    guarded("critic", step, [&] {
      std::vector<Tensor> losses;
      double reward_sum = 0.0;
      for (std::size_t i : sampler.next(cfg.batch_size)) {
        Trajectory traj = sample_trajectory(model, train_pairs[i], cfg.model.max_steps, cfg.temperature, sample_rng, false);
        const double r = bleu_reward(traj.candidate, references[i], cfg.reward);
        reward_sum += r;
        losses.push_back(critic_loss(traj.values, r));
      }
      const Tensor total = tn::scale(sum_all(losses), inv_batch);
      tn::backward(total);
      tn::adagrad_step(critic, optim, cfg.model.precision);
      tn::zero_grads(critic);
      record_step("critic", step, total.item(), reward_sum * inv_batch);
    });
  }

  // Joint actor-critic phase: L(Theta) = L(theta) + L(phi).
  optim.learning_rate = cfg.joint_learning_rate;
  result.final_val_bleu1 = result.mle_val_bleu1;
  for (std::size_t step = 1; step <= cfg.joint_steps; ++step) {
    guarded("joint", step, [&] {
      std::vector<Tensor> losses;
      double reward_sum = 0.0;
      for (std::size_t i : sampler.next(cfg.batch_size)) {
        Trajectory traj = sample_trajectory(model, train_pairs[i], cfg.model.max_steps, cfg.temperature, sample_rng, true);
        const double r = bleu_reward(traj.candidate, references[i], cfg.reward);
        reward_sum += r;
        losses.push_back(tn::add(actor_loss(traj.log_probs, r, traj.values), critic_loss(traj.values, r)));
      }
      const Tensor total = tn::scale(sum_all(losses), inv_batch);
      tn::backward(total);
      tn::adagrad_step(all, optim, cfg.model.precision);
      tn::zero_grads(all);
      record_step("joint", step, total.item(), reward_sum * inv_batch);
    });
    if (due(step, cfg.joint_steps)) {
      const double v = validate("joint", step);
      result.final_val_bleu1 = v;
      if (v > best) {
        best = v;
        best_params = model.snapshot();
      }
    }
  }
  model.restore(best_params);
  result.best_val_bleu1 = best;
  if (persist) model.save(out_dir / "checkpoint");
  return result;
}

}  // namespace ts3
