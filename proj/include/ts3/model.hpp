#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "ts3/corpus.hpp"
#include "ts3/decoder.hpp"
#include "ts3/encoder.hpp"

namespace ts3 {

struct ModelConfig {
  std::size_t d_model = 128;
  std::size_t heads = 4;
  std::size_t layers = 2;
  std::size_t d_ff = 0;  // 0 selects 4 * d_model
  std::size_t max_positions = 512;
  std::size_t max_steps = 30;  // decoding cap T
  std::size_t code_vocab_max = 8192;
  std::size_t comment_vocab_max = 8192;
  std::size_t min_freq = 1;
  tensor::Precision precision = tensor::Precision::kF32;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

// V_phi(s_t) = s_t w + b
struct CriticParams {
  Tensor weight;  // d_state × 1
  Tensor bias;    // 1 × 1
};

// Saved parameter values, independent of the live tensors.
using ParamSnapshot = std::vector<std::vector<double>>;

/// Actor (code encoder, comment encoder, decoder) and critic parameters
/// together with both vocabularies. Copies share parameter storage.
class Model {
 public:
  static Model create(const ModelConfig& config, Vocab code_vocab, Vocab comment_vocab, std::uint64_t seed);
  // Builds both vocabularies from the pairs, then initializes.
  static Model from_pairs(const ModelConfig& config, const PairSet& pairs, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  const Vocab& code_vocab() const { return code_vocab_; }
  const Vocab& comment_vocab() const { return comment_vocab_; }
  const EncoderStack& code_encoder() const { return code_encoder_; }
  const EncoderStack& comment_encoder() const { return comment_encoder_; }
  const DecoderParams& decoder() const { return decoder_; }
  const CriticParams& critic() const { return critic_; }
  DecoderView decoder_view() const { return {decoder_, comment_encoder_}; }

  // Names are "actor.*" and "critic.*" respectively.
  tensor::ParamList actor_params() const;
  tensor::ParamList critic_params() const;
  tensor::ParamList all_params() const;

  SeqEncoding encode_code(std::string_view code) const;
  SeqEncoding encode_tree(const IndentTree& tree) const;
  // Comments and queries; an empty sequence encodes as a single <unk>.
  SeqEncoding encode_comment(const TokenSeq& tokens) const;

  std::vector<TokenId> generate_ids(const Tensor& code_repr, const DecodeConfig& cfg, std::uint64_t seed = 0) const;
  // Greedy comment tokens for a snippet.
  std::vector<std::string> summarize_tokens(std::string_view code) const;
  std::string summarize(std::string_view code) const;

  ParamSnapshot snapshot() const;
  void restore(const ParamSnapshot& snap);

  // Writes meta.json (config + vocabularies) and weights.ts3w into `dir`.
  void save(const std::filesystem::path& dir) const;
  static Model load(const std::filesystem::path& dir);

 private:
  ModelConfig config_;
  Vocab code_vocab_;
  Vocab comment_vocab_;
  EncoderStack code_encoder_;
  EncoderStack comment_encoder_;
  DecoderParams decoder_;
  CriticParams critic_;
};

}  // namespace ts3
