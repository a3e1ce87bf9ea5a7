#include "ts3/decoder.hpp"

#include <cmath>

#include "ts3/error.hpp"

namespace ts3 {
namespace {

namespace tn = ts3::tensor;

Tensor init_uniform(std::size_t rows, std::size_t cols, Rng& rng, tn::Precision p) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::vector<double> v(rows * cols);
  for (double& x : v) x = rng.uniform(-limit, limit);
  Tensor t = Tensor::parameter(rows, cols, std::move(v));
  tn::round_to_precision(t, p);
  return t;
}

Tensor zeros_param(std::size_t rows, std::size_t cols) {
  return Tensor::parameter(rows, cols, std::vector<double>(rows * cols, 0.0));
}

}  // namespace

DecoderParams DecoderParams::create(std::size_t d_model, std::size_t vocab_size, Rng& rng, tn::Precision precision) {
  DecoderParams p;
  p.init_weight = init_uniform(d_model, d_model, rng, precision);
  p.init_bias = zeros_param(1, d_model);
  p.combine_weight = init_uniform(3 * d_model, d_model, rng, precision);
  p.combine_bias = zeros_param(1, d_model);
  p.output.weight = init_uniform(d_model, vocab_size, rng, precision);
  p.output.bias = zeros_param(1, vocab_size);
  return p;
}

void DecoderParams::collect_params(const std::string& prefix, tn::ParamList& out) const {
  out.push_back({prefix + ".init.weight", init_weight});
  out.push_back({prefix + ".init.bias", init_bias});
  out.push_back({prefix + ".combine.weight", combine_weight});
  out.push_back({prefix + ".combine.bias", combine_bias});
  out.push_back({prefix + ".output.weight", output.weight});
  out.push_back({prefix + ".output.bias", output.bias});
}

void DecodeConfig::validate() const {
  if (max_steps < 1) throw ConfigError("max_steps must be at least 1");
  if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
}

DecodeState init_state(const Tensor& code_repr, const DecoderParams& params) {
  DecodeState s;
  s.code_repr = code_repr;
  s.hidden = tn::add_row(tn::matmul(code_repr, params.init_weight), params.init_bias);
  return s;
}

Tensor next_logits(const DecodeState& state, const OutputProjection& proj) {
  return tn::add_row(tn::matmul(state.hidden, proj.weight), proj.bias);
}

Tensor next_distribution(const DecodeState& state, const OutputProjection& proj) {
  return tn::softmax_rows(next_logits(state, proj));
}

Tensor next_log_distribution(const DecodeState& state, const OutputProjection& proj) {
  return tn::log_softmax_rows(next_logits(state, proj));
}

DecodeState advance(const DecodeState& state, TokenId token, const DecoderView& decoder) {
  const auto vocab_size = decoder.params.output.weight.cols();
  if (token < 0 || static_cast<std::size_t>(token) >= vocab_size) {
    throw DataError("token id " + std::to_string(token) + " outside the comment vocabulary");
  }
  if (state.terminal) throw DataError("cannot advance a terminal decode state");
  DecodeState next;
  next.code_repr = state.code_repr;
  next.prefix_ids = state.prefix_ids;
  next.prefix_ids.push_back(token);
  next.step = state.step + 1;
  if (token == Vocab::kEos) {
    next.terminal = true;
    next.hidden = state.hidden;
    return next;
  }
  const SeqEncoding prefix = encode_token_ids(next.prefix_ids, decoder.prefix_encoder);
  const std::vector<Tensor> parts{state.hidden, prefix.pooled, state.code_repr};
  next.hidden = tn::tanh(tn::add_row(tn::matmul(tn::concat_cols(parts), decoder.params.combine_weight),
                                     decoder.params.combine_bias));
  return next;
}

std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

std::size_t sample_index(std::span<const double> probs, Rng& rng) {
  const double u = rng.uniform();
  double cumulative = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    cumulative += probs[i];
    last_positive = i;
    if (u < cumulative) return i;
  }
  return last_positive;
}

std::vector<TokenId> generate(const Tensor& code_repr, const DecoderView& decoder, const DecodeConfig& cfg,
                              std::uint64_t seed) {
  cfg.validate();
  tn::NoGradGuard no_grad;
  Rng rng(seed);
  DecodeState state = init_state(code_repr, decoder.params);
  std::vector<TokenId> out;
  while (out.size() < cfg.max_steps) {
    Tensor logits = next_logits(state, decoder.params.output);
    std::size_t pick;
    if (cfg.mode == DecodeMode::kGreedy) {
      pick = argmax(logits.values());
    } else {
      pick = sample_index(tn::softmax_rows(tn::scale(logits, 1.0 / cfg.temperature)).values(), rng);
    }
    const auto token = static_cast<TokenId>(pick);
    if (token == Vocab::kEos) break;
    out.push_back(token);
    if (out.size() < cfg.max_steps) state = advance(state, token, decoder);
  }
  return out;
}

}  // namespace ts3
