#include "ts3/encoder.hpp"

#include <cmath>

#include "ts3/error.hpp"

namespace ts3 {
namespace {

namespace tn = ts3::tensor;

Tensor uniform_param(std::size_t rows, std::size_t cols, double limit, Rng& rng, tn::Precision p) {
  std::vector<double> v(rows * cols);
  for (double& x : v) x = rng.uniform(-limit, limit);
  Tensor t = Tensor::parameter(rows, cols, std::move(v));
  tn::round_to_precision(t, p);
  return t;
}

Tensor xavier(std::size_t rows, std::size_t cols, Rng& rng, tn::Precision p) {
  return uniform_param(rows, cols, std::sqrt(6.0 / static_cast<double>(rows + cols)), rng, p);
}

Tensor filled(std::size_t rows, std::size_t cols, double value) {
  return Tensor::parameter(rows, cols, std::vector<double>(rows * cols, value));
}

}  // namespace

void EncoderConfig::validate() const {
  if (vocab_size == 0) throw ConfigError("encoder vocabulary is empty");
  if (heads == 0 || d_model == 0 || d_model % heads != 0) {
    throw ConfigError("d_model " + std::to_string(d_model) + " is not divisible by " + std::to_string(heads) + " heads");
  }
  if (layers == 0) throw ConfigError("encoder needs at least one layer");
}

EncoderStack EncoderStack::create(const EncoderConfig& config, Rng& rng, tn::Precision precision) {
  config.validate();
  EncoderStack s;
  s.config_ = config;
  const std::size_t d = config.d_model;
  const std::size_t dk = d / config.heads;
  const std::size_t dff = config.ff_width();
  s.embedding_ = uniform_param(config.vocab_size, d, 1.0, rng, precision);
  s.positional_ = sinusoid_table(config.max_positions, d);
  for (std::size_t l = 0; l < config.layers; ++l) {
    EncoderLayerParams layer;
    for (std::size_t h = 0; h < config.heads; ++h) {
      layer.attention.query.push_back(xavier(d, dk, rng, precision));
      layer.attention.key.push_back(xavier(d, dk, rng, precision));
      layer.attention.value.push_back(xavier(d, dk, rng, precision));
    }
    layer.attention.output = xavier(d, d, rng, precision);
    layer.ff_in = xavier(d, dff, rng, precision);
    layer.ff_in_bias = filled(1, dff, 0.0);
    layer.ff_out = xavier(dff, d, rng, precision);
    layer.ff_out_bias = filled(1, d, 0.0);
    layer.norm1_gain = filled(1, d, 1.0);
    layer.norm1_bias = filled(1, d, 0.0);
    layer.norm2_gain = filled(1, d, 1.0);
    layer.norm2_bias = filled(1, d, 0.0);
    s.layers_.push_back(std::move(layer));
  }
  return s;
}

void EncoderStack::collect_params(const std::string& prefix, tn::ParamList& out) const {
  out.push_back({prefix + ".embedding", embedding_});
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    const std::string p = prefix + ".layer" + std::to_string(l) + ".";
    for (std::size_t h = 0; h < layer.attention.heads(); ++h) {
      const std::string hs = std::to_string(h);
      out.push_back({p + "attn.query" + hs, layer.attention.query[h]});
      out.push_back({p + "attn.key" + hs, layer.attention.key[h]});
      out.push_back({p + "attn.value" + hs, layer.attention.value[h]});
    }
    out.push_back({p + "attn.output", layer.attention.output});
    out.push_back({p + "ff.in", layer.ff_in});
    out.push_back({p + "ff.in_bias", layer.ff_in_bias});
    out.push_back({p + "ff.out", layer.ff_out});
    out.push_back({p + "ff.out_bias", layer.ff_out_bias});
    out.push_back({p + "norm1.gain", layer.norm1_gain});
    out.push_back({p + "norm1.bias", layer.norm1_bias});
    out.push_back({p + "norm2.gain", layer.norm2_gain});
    out.push_back({p + "norm2.bias", layer.norm2_bias});
  }
}

Tensor sinusoid_table(std::size_t positions, std::size_t d_model) {
  std::vector<double> v(positions * d_model);
  for (std::size_t pos = 0; pos < positions; ++pos) {
    for (std::size_t i = 0; i < d_model; ++i) {
      const double rate = std::pow(10000.0, static_cast<double>(2 * (i / 2)) / static_cast<double>(d_model));
      const double angle = static_cast<double>(pos) / rate;
      v[pos * d_model + i] = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return Tensor::constant(positions, d_model, std::move(v));
}

namespace {

Tensor with_positions(const Tensor& rows, const EncoderStack& stack) {
  if (!stack.config().positional) return rows;
  const std::size_t n = rows.rows();
  if (n > stack.positional().rows()) {
    throw DataError("sequence of " + std::to_string(n) + " rows exceeds the positional table (" +
                    std::to_string(stack.positional().rows()) + ")");
  }
  const auto table = stack.positional().values();
  return tn::add(rows, Tensor::constant(n, rows.cols(), {table.begin(), table.begin() + static_cast<std::ptrdiff_t>(n * rows.cols())}));
}

}  // namespace

Tensor embed(std::span<const TokenId> ids, const EncoderStack& stack) {
  if (ids.empty()) throw DataError("cannot embed an empty sequence");
  return with_positions(tn::gather_rows(stack.embedding(), ids), stack);
}

Tensor self_attention(const Tensor& x, const AttentionParams& params, std::vector<Tensor>* weights) {
  if (params.heads() == 0) throw ShapeError("attention has no heads");
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(params.key_dim()));
  std::vector<Tensor> heads;
  heads.reserve(params.heads());
  for (std::size_t h = 0; h < params.heads(); ++h) {
    Tensor q = tn::matmul(x, params.query[h]);
    Tensor k = tn::matmul(x, params.key[h]);
    Tensor v = tn::matmul(x, params.value[h]);
    Tensor w = tn::softmax_rows(tn::scale(tn::matmul(q, tn::transpose(k)), inv_sqrt_dk));
    if (weights != nullptr) weights->push_back(w);
    heads.push_back(tn::matmul(w, v));
  }
  Tensor joined = heads.size() == 1 ? heads.front() : tn::concat_cols(heads);
  return tn::matmul(joined, params.output);
}

Tensor encoder_layer(const Tensor& x, const EncoderLayerParams& layer, double eps) {
  Tensor x1 = tn::layer_norm(tn::add(x, self_attention(x, layer.attention)), layer.norm1_gain, layer.norm1_bias, eps);
  Tensor hidden = tn::relu(tn::add_row(tn::matmul(x1, layer.ff_in), layer.ff_in_bias));
  Tensor ff = tn::add_row(tn::matmul(hidden, layer.ff_out), layer.ff_out_bias);
  return tn::layer_norm(tn::add(x1, ff), layer.norm2_gain, layer.norm2_bias, eps);
}

SeqEncoding encode_rows(const Tensor& rows, const EncoderStack& stack) {
  Tensor x = with_positions(rows, stack);
  for (const auto& layer : stack.layers()) x = encoder_layer(x, layer, stack.config().layer_norm_eps);
  return {x, tn::mean_rows(x)};
}

SeqEncoding encode_token_ids(std::span<const TokenId> ids, const EncoderStack& stack) {
  if (ids.empty()) throw DataError("cannot encode an empty sequence");
  Tensor x = embed(ids, stack);
  for (const auto& layer : stack.layers()) x = encoder_layer(x, layer, stack.config().layer_norm_eps);
  return {x, tn::mean_rows(x)};
}

SeqEncoding encode_sequence(const TokenSeq& tokens, const EncoderStack& stack, const Vocab& vocab) {
  if (tokens.empty()) throw DataError("cannot encode an empty token sequence");
  const auto ids = ts3::encode_ids(tokens, vocab);
  return encode_token_ids(ids, stack);
}

SeqEncoding encode_tree(const IndentTree& tree, const EncoderStack& stack, const Vocab& vocab) {
  std::vector<SeqEncoding> statements;
  statements.reserve(tree.size());
  for (const auto& node : tree.nodes()) {
    auto ids = ts3::encode_ids(tokenize_code(node.statement), vocab);
    if (ids.empty()) ids.push_back(Vocab::kUnk);
    statements.push_back(encode_token_ids(ids, stack));
  }
  const EncodePlan plan = postorder_schedule(tree);
  if (plan.steps.empty()) return statements.front();

  std::vector<Tensor> resolved(tree.size());
  for (std::size_t i = 0; i < tree.size(); ++i) resolved[i] = statements[i].pooled;
  SeqEncoding last;
  for (const auto& step : plan.steps) {
    std::vector<Tensor> rows;
    rows.reserve(step.inputs.size());
    rows.push_back(statements[step.output_node].pooled);
    for (std::size_t i = 1; i < step.inputs.size(); ++i) rows.push_back(resolved[step.inputs[i]]);
    last = encode_rows(tn::concat_rows(rows), stack);
    resolved[step.output_node] = last.pooled;
  }
  return last;
}

}  // namespace ts3
