#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "ts3/corpus.hpp"
#include "ts3/metrics.hpp"
#include "ts3/model.hpp"

namespace ts3 {

struct RewardConfig {
  std::size_t n_max = 1;   // highest n-gram order
  double epsilon = 1e-9;   // zero-count smoothing

  void validate() const;
};

/// r = exp(1/N * sum_n log p_n), p_n = clipped matches / candidate n-grams.
/// When an order has zero matches or zero candidate n-grams, epsilon is
/// added to both counts. No brevity penalty. Empty candidate scores 0.
double bleu_reward(const metrics::Tokens& candidate, const metrics::Tokens& reference, const RewardConfig& cfg);

// V_phi(s_t) on the detached state vector: gradients reach only phi.
Tensor critic_value(const DecodeState& state, const CriticParams& critic);

/// Mean teacher-forced negative log-likelihood of the reference comment
/// followed by EOS.
Tensor mle_loss(const CodeCommentPair& pair, const Model& model);

// One sampled decode with the tape entries needed by both losses.
struct Trajectory {
  std::vector<TokenId> actions;  // EOS included when emitted
  std::vector<Tensor> log_probs;  // log p(y_t | s_t), 1×1 each
  std::vector<Tensor> values;     // V_phi(s_t), 1×1 each
  metrics::Tokens candidate;      // decoded words, reserved ids dropped
};

/// Samples from the actor. With `actor_grad` false the actor runs off the
/// tape (critic pretraining), so only the value heads can receive gradients.
Trajectory sample_trajectory(const Model& model, const CodeCommentPair& pair, std::size_t max_steps,
                             double temperature, Rng& rng, bool actor_grad);

/// REINFORCE with baseline: -sum_t (r - V_t) log p(y_t|s_t), the advantage
/// held constant. Throws DataError for an empty trajectory.
Tensor actor_loss(std::span<const Tensor> log_probs, double reward, std::span<const Tensor> values);

// 1/2 * mean_t (r - V_t)^2
Tensor critic_loss(std::span<const Tensor> values, double target);

struct TrainConfig {
  ModelConfig model;
  double learning_rate = 0.01;        // mle and critic phases
  double joint_learning_rate = 0.001;  // joint phase; sampled-reward gradients are noisier
  double adagrad_epsilon = 1e-8;
  std::size_t mle_steps = 2000;
  std::size_t critic_steps = 500;
  std::size_t joint_steps = 3000;
  std::size_t batch_size = 8;
  std::size_t eval_every = 250;
  double temperature = 1.0;
  RewardConfig reward;
  std::uint64_t seed = 1;

  // Applies one `key = value` setting; throws ConfigError for unknown keys.
  void set(const std::string& key, const std::string& value);
  // Reads a key = value file ('#' starts a comment).
  void load_file(const std::filesystem::path& path);
  nlohmann::json to_json() const;
};

struct StepRecord {
  std::string phase;  // "mle", "critic" or "joint"
  std::size_t step = 0;
  double loss = 0.0;
  double reward = 0.0;  // mean sampled reward, 0 in the mle phase
};

struct ValidationRecord {
  std::string phase;
  std::size_t step = 0;
  double val_bleu1 = 0.0;
};

struct TrainResult {
  std::vector<StepRecord> steps;
  std::vector<ValidationRecord> validations;
  double mle_val_bleu1 = 0.0;    // checkpoint carried out of the MLE phase
  double final_val_bleu1 = 0.0;  // last joint-phase iterate
  double best_val_bleu1 = 0.0;   // persisted checkpoint
};

// Greedy corpus BLEU-1 of the model over the pairs.
double validation_bleu1(const Model& model, const PairSet& pairs);

/// Three phases: actor MLE pretraining, critic pretraining against a frozen
/// actor, then joint actor-critic updates of L(theta) + L(phi), all with
/// diagonal AdaGrad. Validation BLEU-1 runs every eval_every steps and at
/// phase ends; the MLE phase hands on its best iterate (the latest one on
/// ties). When `out_dir` is non-empty it receives checkpoint_mle/,
/// checkpoint/ (best validation), losses.tsv and metrics.jsonl. `model` is left holding the best weights.
TrainResult train(Model& model, const PairSet& train_pairs, const PairSet& val_pairs, const TrainConfig& cfg,
                  const std::filesystem::path& out_dir = {});

}  // namespace ts3
