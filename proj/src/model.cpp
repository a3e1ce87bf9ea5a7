#include "ts3/model.hpp"

#include <fstream>

#include "ts3/checkpoint.hpp"
#include "ts3/error.hpp"

namespace ts3 {
namespace {

namespace tn = ts3::tensor;

EncoderConfig encoder_config(const ModelConfig& c, std::size_t vocab_size) {
  EncoderConfig e;
  e.vocab_size = vocab_size;
  e.d_model = c.d_model;
  e.heads = c.heads;
  e.layers = c.layers;
  e.d_ff = c.d_ff;
  e.max_positions = c.max_positions;
  return e;
}

}  // namespace

nlohmann::json ModelConfig::to_json() const {
  return {{"d_model", d_model},
          {"heads", heads},
          {"layers", layers},
          {"d_ff", d_ff},
          {"max_positions", max_positions},
          {"max_steps", max_steps},
          {"code_vocab_max", code_vocab_max},
          {"comment_vocab_max", comment_vocab_max},
          {"min_freq", min_freq},
          {"precision", precision == tn::Precision::kF32 ? "f32" : "f64"}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.d_model = j.at("d_model").get<std::size_t>();
  c.heads = j.at("heads").get<std::size_t>();
  c.layers = j.at("layers").get<std::size_t>();
  c.d_ff = j.at("d_ff").get<std::size_t>();
  c.max_positions = j.at("max_positions").get<std::size_t>();
  c.max_steps = j.at("max_steps").get<std::size_t>();
  c.code_vocab_max = j.at("code_vocab_max").get<std::size_t>();
  c.comment_vocab_max = j.at("comment_vocab_max").get<std::size_t>();
  c.min_freq = j.at("min_freq").get<std::size_t>();
  c.precision = j.at("precision").get<std::string>() == "f64" ? tn::Precision::kF64 : tn::Precision::kF32;
  return c;
}

Model Model::create(const ModelConfig& config, Vocab code_vocab, Vocab comment_vocab, std::uint64_t seed) {
  Model m;
  m.config_ = config;
  m.code_vocab_ = std::move(code_vocab);
  m.comment_vocab_ = std::move(comment_vocab);
  Rng rng(seed);
  m.code_encoder_ = EncoderStack::create(encoder_config(config, m.code_vocab_.size()), rng, config.precision);
  m.comment_encoder_ = EncoderStack::create(encoder_config(config, m.comment_vocab_.size()), rng, config.precision);
  m.decoder_ = DecoderParams::create(config.d_model, m.comment_vocab_.size(), rng, config.precision);
  m.critic_.weight = Tensor::parameter(config.d_model, 1, std::vector<double>(config.d_model, 0.0));
  m.critic_.bias = Tensor::parameter(1, 1, {0.0});
  return m;
}

Model Model::from_pairs(const ModelConfig& config, const PairSet& pairs, std::uint64_t seed) {
  std::vector<TokenSeq> code, comments;
  for (const auto& p : pairs) {
    code.push_back(tokenize_code(p.code));
    comments.push_back(tokenize_nl(p.comment));
  }
  return create(config, build_vocab(code, config.code_vocab_max, config.min_freq),
                build_vocab(comments, config.comment_vocab_max, config.min_freq), seed);
}

tn::ParamList Model::actor_params() const {
  tn::ParamList out;
  code_encoder_.collect_params("actor.enc", out);
  comment_encoder_.collect_params("actor.cmt_enc", out);
  decoder_.collect_params("actor.dec", out);
  return out;
}

tn::ParamList Model::critic_params() const {
  return {{"critic.value.weight", critic_.weight}, {"critic.value.bias", critic_.bias}};
}

tn::ParamList Model::all_params() const {
  auto out = actor_params();
  for (auto& p : critic_params()) out.push_back(std::move(p));
  return out;
}

SeqEncoding Model::encode_code(std::string_view code) const { return encode_tree(build_tree(code)); }

SeqEncoding Model::encode_tree(const IndentTree& tree) const {
  return ts3::encode_tree(tree, code_encoder_, code_vocab_);
}

SeqEncoding Model::encode_comment(const TokenSeq& tokens) const {
  auto ids = encode_ids(tokens, comment_vocab_);
  if (ids.empty()) ids.push_back(Vocab::kUnk);
  return encode_token_ids(ids, comment_encoder_);
}

std::vector<TokenId> Model::generate_ids(const Tensor& code_repr, const DecodeConfig& cfg, std::uint64_t seed) const {
  return generate(code_repr, decoder_view(), cfg, seed);
}

std::vector<std::string> Model::summarize_tokens(std::string_view code) const {
  tn::NoGradGuard no_grad;
  DecodeConfig cfg;
  cfg.max_steps = config_.max_steps;
  const auto ids = generate_ids(encode_code(code).pooled, cfg);
  return decode_ids(ids, comment_vocab_);
}

std::string Model::summarize(std::string_view code) const {
  TokenSeq seq{summarize_tokens(code), TokenKind::kNaturalLanguage};
  return seq.joined();
}

ParamSnapshot Model::snapshot() const {
  ParamSnapshot snap;
  for (const auto& p : all_params()) snap.emplace_back(p.tensor.values().begin(), p.tensor.values().end());
  return snap;
}

void Model::restore(const ParamSnapshot& snap) {
  auto params = all_params();
  if (snap.size() != params.size()) throw ShapeError("snapshot does not match model parameters");
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto dst = params[i].tensor.mutable_values();
    if (dst.size() != snap[i].size()) throw ShapeError("snapshot entry " + params[i].name + " has the wrong size");
    std::copy(snap[i].begin(), snap[i].end(), dst.begin());
  }
}

void Model::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  nlohmann::json meta{{"format", "ts3-model"},
                      {"config", config_.to_json()},
                      {"code_vocab", code_vocab_.to_json()},
                      {"comment_vocab", comment_vocab_.to_json()}};
  std::ofstream out(dir / "meta.json", std::ios::trunc);
  if (!out) throw DataError("cannot write " + (dir / "meta.json").string());
  out << meta.dump(1) << '\n';
  tn::save_arrays(dir / "weights.ts3w", tn::to_arrays(all_params()));
}

Model Model::load(const std::filesystem::path& dir) {
  std::ifstream in(dir / "meta.json");
  if (!in) throw DataError("no model at " + dir.string() + " (missing meta.json)");
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("corrupt meta.json: " + std::string(e.what()));
  }
  Model m = create(ModelConfig::from_json(meta.at("config")), Vocab::from_json(meta.at("code_vocab")),
                   Vocab::from_json(meta.at("comment_vocab")), 0);
  auto params = m.all_params();
  tn::assign_arrays(params, tn::load_arrays(dir / "weights.ts3w"));
  return m;
}

}  // namespace ts3
