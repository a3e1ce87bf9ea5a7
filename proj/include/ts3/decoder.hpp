#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ts3/encoder.hpp"

namespace ts3 {

// p(y_t | s_t) = softmax(s_t W_s + b_s)
struct OutputProjection {
  Tensor weight;  // d_state × |comment vocab|
  Tensor bias;    // 1 × |comment vocab|
};

struct DecoderParams {
  Tensor init_weight;     // d_model × d_state, s_0 from the code representation
  Tensor init_bias;       // 1 × d_state
  Tensor combine_weight;  // (d_state + 2 d_model) × d_state
  Tensor combine_bias;    // 1 × d_state
  OutputProjection output;

  static DecoderParams create(std::size_t d_model, std::size_t vocab_size, Rng& rng,
                              tensor::Precision precision = tensor::Precision::kF64);
  void collect_params(const std::string& prefix, tensor::ParamList& out) const;
};

// MDP state s_t = {x, y_1..t-1}.
struct DecodeState {
  Tensor code_repr;  // 1 × d_model
  std::vector<TokenId> prefix_ids;
  Tensor hidden;  // 1 × d_state
  std::size_t step = 1;
  bool terminal = false;
};

enum class DecodeMode { kGreedy, kSample };

struct DecodeConfig {
  std::size_t max_steps = 30;
  DecodeMode mode = DecodeMode::kGreedy;
  double temperature = 1.0;

  void validate() const;
};

// Everything the actor needs to decode: its parameters and the encoder that
// reads the generated prefix.
struct DecoderView {
  const DecoderParams& params;
  const EncoderStack& prefix_encoder;
};

// hidden = code_repr W_init + b_init
DecodeState init_state(const Tensor& code_repr, const DecoderParams& params);

Tensor next_logits(const DecodeState& state, const OutputProjection& proj);
Tensor next_distribution(const DecodeState& state, const OutputProjection& proj);
Tensor next_log_distribution(const DecodeState& state, const OutputProjection& proj);

/// Appends `token` to the prefix and recomputes
///   hidden = tanh([s_{t-1} | pooled(encode(prefix)) | code_repr] W_c + b_c).
/// EOS only marks the state terminal; its hidden vector is carried over since
/// nothing is predicted from a terminal state.
DecodeState advance(const DecodeState& state, TokenId token, const DecoderView& decoder);

/// Decodes at most cfg.max_steps tokens. Greedy ties resolve to the smaller
/// id; sampling is reproducible for a fixed seed. BOS/EOS are not returned.
std::vector<TokenId> generate(const Tensor& code_repr, const DecoderView& decoder, const DecodeConfig& cfg,
                              std::uint64_t seed = 0);

// Index of the largest entry, smallest index on ties.
std::size_t argmax(std::span<const double> values);
// Draws an index from a probability row.
std::size_t sample_index(std::span<const double> probs, Rng& rng);

}  // namespace ts3
