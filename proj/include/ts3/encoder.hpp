#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "ts3/corpus.hpp"
#include "ts3/indent_tree.hpp"
#include "ts3/optim.hpp"
#include "ts3/random.hpp"
#include "ts3/tensor.hpp"
#include "ts3/tokenizer.hpp"

namespace ts3 {

using tensor::Tensor;

struct EncoderConfig {
  std::size_t vocab_size = 0;
  std::size_t d_model = 128;
  std::size_t heads = 4;
  std::size_t layers = 2;
  std::size_t d_ff = 0;  // 0 selects 4 * d_model
  std::size_t max_positions = 512;
  bool positional = true;
  double layer_norm_eps = 1e-5;

  std::size_t ff_width() const { return d_ff == 0 ? 4 * d_model : d_ff; }
  void validate() const;
};

// Per-head query/key/value projections plus the shared output projection.
struct AttentionParams {
  std::vector<Tensor> query;  // heads × (d_model × d_k)
  std::vector<Tensor> key;
  std::vector<Tensor> value;
  Tensor output;  // d_model × d_model

  std::size_t heads() const { return query.size(); }
  std::size_t key_dim() const { return query.front().cols(); }
};

struct EncoderLayerParams {
  AttentionParams attention;
  Tensor ff_in;        // d_model × d_ff
  Tensor ff_in_bias;   // 1 × d_ff
  Tensor ff_out;       // d_ff × d_model
  Tensor ff_out_bias;  // 1 × d_model
  Tensor norm1_gain, norm1_bias;
  Tensor norm2_gain, norm2_bias;
};

/// Token embedding, fixed sinusoidal positions and N identical
/// self-attention + feed-forward layers.
class EncoderStack {
 public:
  EncoderStack() = default;
  static EncoderStack create(const EncoderConfig& config, Rng& rng,
                             tensor::Precision precision = tensor::Precision::kF64);

  const EncoderConfig& config() const { return config_; }
  const Tensor& embedding() const { return embedding_; }
  const Tensor& positional() const { return positional_; }
  const std::vector<EncoderLayerParams>& layers() const { return layers_; }
  std::vector<EncoderLayerParams>& mutable_layers() { return layers_; }

  // Trainable arrays named "<prefix>.embedding", "<prefix>.layer{i}.<role>".
  void collect_params(const std::string& prefix, tensor::ParamList& out) const;

 private:
  EncoderConfig config_;
  Tensor embedding_;
  Tensor positional_;
  std::vector<EncoderLayerParams> layers_;
};

struct SeqEncoding {
  Tensor token_matrix;  // L × d_model
  Tensor pooled;        // 1 × d_model, row mean of token_matrix
};

Tensor sinusoid_table(std::size_t positions, std::size_t d_model);

// Rows: embedding[id_i] + positional[i] (positions skipped when disabled).
Tensor embed(std::span<const TokenId> ids, const EncoderStack& stack);

/// Multi-head scaled dot-product self-attention without masking. When
/// `weights` is non-null it receives each head's L×L attention matrix.
Tensor self_attention(const Tensor& x, const AttentionParams& params, std::vector<Tensor>* weights = nullptr);

/// x1 = LN(x + attention(x)); out = LN(x1 + W2 relu(W1 x1 + b1) + b2)
Tensor encoder_layer(const Tensor& x, const EncoderLayerParams& layer, double eps = 1e-5);

// Adds positions to already-embedded rows and runs every layer.
SeqEncoding encode_rows(const Tensor& rows, const EncoderStack& stack);

SeqEncoding encode_token_ids(std::span<const TokenId> ids, const EncoderStack& stack);

/// Embeds and encodes a token sequence. Throws DataError when empty.
SeqEncoding encode_sequence(const TokenSeq& tokens, const EncoderStack& stack, const Vocab& vocab);

/// Tree-transformer: every statement is encoded as a token sequence, then
/// the post-order plan composes node-vector lists through the same stack.
/// Statements with no code tokens encode as a single <unk>.
SeqEncoding encode_tree(const IndentTree& tree, const EncoderStack& stack, const Vocab& vocab);

}  // namespace ts3
