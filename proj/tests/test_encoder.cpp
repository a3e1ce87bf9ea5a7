#include <cmath>
#include <numeric>

#include "doctest.h"
#include "gradcheck.hpp"
#include "ts3/encoder.hpp"
#include "ts3/error.hpp"

using namespace ts3;
namespace tn = ts3::tensor;
using ts3::testing::check_gradients;
using ts3::testing::probe;

namespace {

EncoderStack small_stack(std::size_t vocab, std::size_t d, std::size_t heads, std::size_t layers, bool positional = true,
                         std::uint64_t seed = 5) {
  EncoderConfig cfg;
  cfg.vocab_size = vocab;
  cfg.d_model = d;
  cfg.heads = heads;
  cfg.layers = layers;
  cfg.max_positions = 64;
  cfg.positional = positional;
  Rng rng(seed);
  return EncoderStack::create(cfg, rng, tn::Precision::kF64);
}

void fill(Tensor t, double v) {
  for (double& x : t.mutable_values()) x = v;
}

void set_identity(Tensor t) {
  auto v = t.mutable_values();
  std::fill(v.begin(), v.end(), 0.0);
  for (std::size_t i = 0; i < std::min(t.rows(), t.cols()); ++i) v[i * t.cols() + i] = 1.0;
}

double cosine(const Tensor& a, const Tensor& b) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a.values()[i] * b.values()[i];
    na += a.values()[i] * a.values()[i];
    nb += b.values()[i] * b.values()[i];
  }
  return dot / std::sqrt(na * nb);
}

Vocab vocab_of(std::vector<std::string> words) {
  return build_vocab(std::vector<TokenSeq>{{std::move(words), TokenKind::kNaturalLanguage}}, 100, 1);
}

}  // namespace

TEST_CASE("attention reproduces the two-token worked example") {
  // One head with d_k = 64 and identity projections: q1.k1 = 112, q1.k2 = 96.
  AttentionParams p;
  for (auto* v : {&p.query, &p.key, &p.value}) {
    v->push_back(Tensor::parameter(64, 64, std::vector<double>(64 * 64)));
    set_identity(v->back());
  }
  p.output = Tensor::parameter(64, 64, std::vector<double>(64 * 64));
  set_identity(p.output);
  std::vector<double> x(2 * 64, 0.0);
  for (std::size_t j : {0, 1, 2, 3}) x[j] = j == 0 ? 8.0 : 4.0;
  for (std::size_t j : {0, 1, 2}) x[64 + j] = j == 0 ? 8.0 : 4.0;
  x[64 + 10] = 1.0;  // keeps the rows distinct without touching the scores
  const Tensor X = Tensor::constant(2, 64, x);

  std::vector<Tensor> weights;
  const Tensor z = self_attention(X, p, &weights);
  REQUIRE(weights.size() == 1);
  CHECK(weights[0].at(0, 0) == doctest::Approx(0.8808).epsilon(1e-3));
  CHECK(weights[0].at(0, 1) == doctest::Approx(0.1192).epsilon(1e-3));
  for (std::size_t j = 0; j < 64; ++j) {
    CHECK(std::abs(z.at(0, j) - (0.88 * X.at(0, j) + 0.12 * X.at(1, j))) < 1e-2);
  }
}

TEST_CASE("embedding adds sinusoidal positions") {
  const EncoderStack s = small_stack(10, 8, 2, 1);
  const std::vector<TokenId> ids{5, 5};
  const Tensor e = embed(ids, s);
  for (std::size_t j = 0; j < 8; j += 2) CHECK(e.at(0, j) == s.embedding().at(5, j));  // sin(0) = 0
  for (std::size_t j = 1; j < 8; j += 2) CHECK(e.at(0, j) == doctest::Approx(s.embedding().at(5, j) + 1.0));
  bool differs = false;
  for (std::size_t j = 0; j < 8; ++j) differs = differs || e.at(0, j) != e.at(1, j);
  CHECK(differs);
  for (double v : s.embedding().values()) CHECK(std::isfinite(v));
  const std::vector<TokenId> bad{10};
  CHECK_THROWS(embed(bad, s));
}

TEST_CASE("single-token attention and weight rows") {
  const EncoderStack s = small_stack(10, 8, 2, 1);
  const auto& att = s.layers()[0].attention;
  const Tensor x = Tensor::constant(1, 8, ts3::testing::random_values(8, 4));
  std::vector<Tensor> w;
  const Tensor out = self_attention(x, att, &w);
  REQUIRE(w.size() == 2);
  for (const auto& head : w) CHECK(head.item() == 1.0);
  std::vector<Tensor> values;
  for (const auto& v : att.value) values.push_back(tn::matmul(x, v));
  const Tensor expected = tn::matmul(tn::concat_cols(values), att.output);
  for (std::size_t j = 0; j < 8; ++j) CHECK(out.at(0, j) == doctest::Approx(expected.at(0, j)));

  const Tensor xs = Tensor::constant(6, 8, ts3::testing::random_values(48, 5, -3, 3));
  std::vector<Tensor> ws;
  self_attention(xs, att, &ws);
  for (const auto& head : ws) {
    for (std::size_t r = 0; r < 6; ++r) {
      double total = 0.0;
      for (std::size_t c = 0; c < 6; ++c) total += head.at(r, c);
      CHECK(total == doctest::Approx(1.0).epsilon(1e-6));
    }
  }
}

TEST_CASE("attention is permutation equivariant without positions") {
  const EncoderStack s = small_stack(10, 8, 2, 2, false);
  const auto vals = ts3::testing::random_values(5 * 8, 6);
  const std::vector<std::size_t> perm{3, 0, 4, 1, 2};
  std::vector<double> permuted;
  for (std::size_t r : perm) permuted.insert(permuted.end(), vals.begin() + r * 8, vals.begin() + (r + 1) * 8);
  const Tensor a = encode_rows(Tensor::constant(5, 8, vals), s).token_matrix;
  const Tensor b = encode_rows(Tensor::constant(5, 8, permuted), s).token_matrix;
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 8; ++j) CHECK(b.at(i, j) == doctest::Approx(a.at(perm[i], j)).epsilon(1e-12));
  }
}

TEST_CASE("one head with d_k = d_model matches direct attention") {
  const EncoderStack s = small_stack(10, 6, 1, 1);
  AttentionParams att = s.layers()[0].attention;
  set_identity(att.output);
  const Tensor x = Tensor::constant(4, 6, ts3::testing::random_values(24, 8));
  const Tensor q = tn::matmul(x, att.query[0]);
  const Tensor k = tn::matmul(x, att.key[0]);
  const Tensor v = tn::matmul(x, att.value[0]);
  const Tensor direct = tn::matmul(tn::softmax_rows(tn::scale(tn::matmul(q, tn::transpose(k)), 1.0 / std::sqrt(6.0))), v);
  const Tensor out = self_attention(x, att);
  for (std::size_t i = 0; i < direct.size(); ++i) CHECK(out.values()[i] == doctest::Approx(direct.values()[i]));
}

TEST_CASE("encoder layer residual path and shapes") {
  EncoderStack s = small_stack(10, 8, 2, 1);
  for (std::size_t len : {1, 5, 50}) {
    const Tensor x = Tensor::constant(len, 8, ts3::testing::random_values(len * 8, 9));
    const Tensor y = encoder_layer(x, s.layers()[0]);
    CHECK(y.rows() == len);
    CHECK(y.cols() == 8);
  }
  auto& layer = s.mutable_layers()[0];
  fill(layer.attention.output, 0.0);
  fill(layer.ff_out, 0.0);
  fill(layer.ff_out_bias, 0.0);
  const Tensor x = Tensor::constant(3, 8, ts3::testing::random_values(24, 10));
  const Tensor once = tn::layer_norm(x, layer.norm1_gain, layer.norm1_bias);
  const Tensor twice = tn::layer_norm(once, layer.norm2_gain, layer.norm2_bias);
  const Tensor y = encoder_layer(x, layer);
  for (std::size_t i = 0; i < y.size(); ++i) CHECK(y.values()[i] == doctest::Approx(twice.values()[i]));
}

TEST_CASE("finite differences through an encoder layer") {
  const EncoderStack s = small_stack(10, 6, 2, 1, true, 12);
  const auto& layer = s.layers()[0];
  Tensor x = ts3::testing::random_param(3, 6, 13);
  tn::ParamList params;
  s.collect_params("enc", params);
  std::vector<Tensor> inputs{x};
  for (auto& p : params) {
    if (p.name != "enc.embedding") inputs.push_back(p.tensor);
  }
  const auto report = check_gradients([&] { return probe(encoder_layer(x, layer)); }, inputs);
  CHECK(report.worst < 1e-4);
}

TEST_CASE("sequence encoding") {
  const Vocab v = vocab_of({"get", "the", "list", "send", "a", "message"});
  const EncoderStack s = small_stack(v.size(), 8, 2, 2);
  const SeqEncoding one = encode_sequence(tokenize_nl("list"), s, v);
  for (std::size_t j = 0; j < 8; ++j) CHECK(one.pooled.at(0, j) == doctest::Approx(one.token_matrix.at(0, j)));

  const SeqEncoding a = encode_sequence(tokenize_nl("get the list"), s, v);
  const SeqEncoding a2 = encode_sequence(tokenize_nl("get the list"), s, v);
  for (std::size_t j = 0; j < 8; ++j) CHECK(a.pooled.at(0, j) == a2.pooled.at(0, j));
  for (std::size_t j = 0; j < 8; ++j) {
    double mean = 0.0;
    for (std::size_t r = 0; r < 3; ++r) mean += a.token_matrix.at(r, j) / 3.0;
    CHECK(a.pooled.at(0, j) == doctest::Approx(mean));
  }
  const SeqEncoding b = encode_sequence(tokenize_nl("send a message"), s, v);
  CHECK(cosine(a.pooled, b.pooled) < 1.0);
  CHECK_THROWS_AS(encode_sequence(TokenSeq{}, s, v), DataError);
}

TEST_CASE("tree encoding") {
  const std::string code = "def f(a):\n    x = a\n    y = x\n    return y\n";
  const Vocab v = build_vocab(std::vector<TokenSeq>{tokenize_code(code)}, 100, 1);
  const EncoderStack s = small_stack(v.size(), 8, 2, 2);

  const SeqEncoding leaf = encode_tree(build_tree("def f(a):"), s, v);
  const SeqEncoding direct = encode_sequence(tokenize_code("def f(a):"), s, v);
  for (std::size_t j = 0; j < 8; ++j) CHECK(leaf.pooled.at(0, j) == direct.pooled.at(0, j));

  const SeqEncoding full = encode_tree(build_tree(code), s, v);
  CHECK(full.token_matrix.rows() == 4);  // root + 3 children
  const SeqEncoding swapped = encode_tree(build_tree("def f(a):\n    y = x\n    x = a\n    return y\n"), s, v);
  double diff = 0.0;
  for (std::size_t j = 0; j < 8; ++j) diff += std::abs(full.pooled.at(0, j) - swapped.pooled.at(0, j));
  CHECK(diff > 1e-9);
  for (double x : full.pooled.values()) CHECK(std::isfinite(x));

  // A statement with no code tokens still encodes.
  CHECK_NOTHROW(encode_tree(build_tree("def f():\n    \"\"\n"), s, v));
}

TEST_CASE("encoder config validation") {
  EncoderConfig cfg;
  cfg.vocab_size = 10;
  cfg.d_model = 10;
  cfg.heads = 3;
  CHECK_THROWS(cfg.validate());
  cfg.heads = 2;
  CHECK_NOTHROW(cfg.validate());
}
