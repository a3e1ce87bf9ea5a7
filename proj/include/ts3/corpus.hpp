#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "ts3/tokenizer.hpp"

namespace ts3 {

// One <code; comment> record.
struct CodeCommentPair {
  std::string id;
  std::string code;
  std::string comment;
};

// Ordered pairs with unique ids.
class PairSet {
 public:
  PairSet() = default;
  explicit PairSet(std::vector<CodeCommentPair> pairs);

  const std::vector<CodeCommentPair>& pairs() const { return pairs_; }
  std::size_t size() const { return pairs_.size(); }
  bool empty() const { return pairs_.empty(); }
  const CodeCommentPair& operator[](std::size_t i) const { return pairs_[i]; }
  auto begin() const { return pairs_.begin(); }
  auto end() const { return pairs_.end(); }

  std::vector<std::string> ids() const;

 private:
  std::vector<CodeCommentPair> pairs_;
};

struct CorpusSplit {
  PairSet train;
  PairSet val;
  PairSet test;
};

/// Reads a JSONL corpus: one object per line with string fields "code" and
/// "comment" and an optional "id" (defaults to the 1-based line number).
/// Throws DataError naming the offending line.
PairSet load_corpus(const std::filesystem::path& path);

// Same as load_corpus over in-memory text.
PairSet parse_corpus(std::string_view jsonl);

/// Shuffles with `seed` and cuts 60/20/20: the train and validation sizes
/// are floored, the remainder goes to test. Requires at least 5 pairs.
CorpusSplit split_corpus(const PairSet& pairs, std::uint64_t seed);

// {"train": [ids], "val": [ids], "test": [ids]}
nlohmann::json split_manifest(const CorpusSplit& split);

using TokenId = std::int32_t;

class Vocab {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kUnk = 1;
  static constexpr TokenId kBos = 2;
  static constexpr TokenId kEos = 3;
  static constexpr std::size_t kReserved = 4;

  Vocab();

  std::size_t size() const { return id_to_token_.size(); }
  TokenId id(const std::string& token) const;
  const std::string& token(TokenId id) const;
  bool contains(const std::string& token) const { return token_to_id_.count(token) != 0; }
  const std::vector<std::string>& tokens() const { return id_to_token_; }

  nlohmann::json to_json() const;
  static Vocab from_json(const nlohmann::json& j);

  bool operator==(const Vocab& other) const { return id_to_token_ == other.id_to_token_; }

 private:
  friend Vocab build_vocab(std::span<const TokenSeq>, std::size_t, std::size_t);
  void append(const std::string& token);

  std::map<std::string, TokenId> token_to_id_;
  std::vector<std::string> id_to_token_;
};

/// Keeps tokens seen at least `min_freq` times, ordered by descending
/// frequency then ascending token text, capped so that the vocabulary
/// (reserved ids included) holds at most `max_size` entries.
Vocab build_vocab(std::span<const TokenSeq> seqs, std::size_t max_size, std::size_t min_freq);

std::vector<TokenId> encode_ids(const TokenSeq& seq, const Vocab& vocab, bool add_bos_eos = false);

// Inverse of encode_ids; reserved ids are skipped.
std::vector<std::string> decode_ids(std::span<const TokenId> ids, const Vocab& vocab);

}  // namespace ts3
