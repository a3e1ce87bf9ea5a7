#include "ts3/corpus.hpp"

#include <algorithm>
#include <fstream>
#include "ts3/random.hpp"
#include <set>
#include <sstream>
#include <unordered_map>

#include "ts3/error.hpp"

namespace ts3 {
namespace {

bool blank(const std::string& s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c) != 0; });
}

std::string required_string(const nlohmann::json& obj, const char* field, std::size_t line) {
  auto it = obj.find(field);
  if (it == obj.end()) {
    throw DataError("line " + std::to_string(line) + ": missing field " + field);
  }
  if (!it->is_string()) {
    throw DataError("line " + std::to_string(line) + ": field " + field + " is not a string");
  }
  auto value = it->get<std::string>();
  if (blank(value)) {
    throw DataError("line " + std::to_string(line) + ": field " + field + " is empty");
  }
  return value;
}

PairSet slice(const std::vector<CodeCommentPair>& v, std::size_t from, std::size_t to) {
  return PairSet(std::vector<CodeCommentPair>(v.begin() + static_cast<std::ptrdiff_t>(from),
                                              v.begin() + static_cast<std::ptrdiff_t>(to)));
}

}  // namespace

PairSet::PairSet(std::vector<CodeCommentPair> pairs) : pairs_(std::move(pairs)) {
  std::set<std::string> seen;
  for (const auto& p : pairs_) {
    if (!seen.insert(p.id).second) throw DataError("duplicate pair id: " + p.id);
  }
}

std::vector<std::string> PairSet::ids() const {
  std::vector<std::string> out;
  out.reserve(pairs_.size());
  for (const auto& p : pairs_) out.push_back(p.id);
  return out;
}

PairSet parse_corpus(std::string_view jsonl) {
  std::vector<CodeCommentPair> pairs;
  std::set<std::string> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= jsonl.size()) {
    auto nl = jsonl.find('\n', pos);
    if (nl == std::string_view::npos) nl = jsonl.size();
    std::string line(jsonl.substr(pos, nl - pos));
    pos = nl + 1;
    ++line_no;
    if (blank(line)) continue;

    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error&) {
      throw DataError("line " + std::to_string(line_no) + ": invalid JSON");
    }
    if (!obj.is_object()) throw DataError("line " + std::to_string(line_no) + ": not a JSON object");

    CodeCommentPair pair;
    pair.code = required_string(obj, "code", line_no);
    pair.comment = required_string(obj, "comment", line_no);
    if (auto it = obj.find("id"); it != obj.end()) {
      if (!it->is_string()) throw DataError("line " + std::to_string(line_no) + ": field id is not a string");
      pair.id = it->get<std::string>();
    } else {
      pair.id = std::to_string(line_no);
    }
    if (!seen.insert(pair.id).second) {
      throw DataError("line " + std::to_string(line_no) + ": duplicate id " + pair.id);
    }
    pairs.push_back(std::move(pair));
  }
  if (pairs.empty()) throw DataError("corpus is empty");
  return PairSet(std::move(pairs));
}

PairSet load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open corpus " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_corpus(buf.str());
}

CorpusSplit split_corpus(const PairSet& pairs, std::uint64_t seed) {
  const std::size_t n = pairs.size();
  if (n < 5) throw DataError("corpus of " + std::to_string(n) + " pairs is too small to split (need >= 5)");
  std::vector<CodeCommentPair> shuffled = pairs.pairs();
  Rng rng(seed);
  rng.shuffle(shuffled.begin(), shuffled.end());
  const std::size_t n_train = n * 60 / 100;
  const std::size_t n_val = n * 20 / 100;
  return {slice(shuffled, 0, n_train), slice(shuffled, n_train, n_train + n_val),
          slice(shuffled, n_train + n_val, n)};
}

nlohmann::json split_manifest(const CorpusSplit& split) {
  return {{"train", split.train.ids()}, {"val", split.val.ids()}, {"test", split.test.ids()}};
}

Vocab::Vocab() {
  for (const char* t : {"<pad>", "<unk>", "<bos>", "<eos>"}) append(t);
}

void Vocab::append(const std::string& token) {
  token_to_id_.emplace(token, static_cast<TokenId>(id_to_token_.size()));
  id_to_token_.push_back(token);
}

TokenId Vocab::id(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size()) {
    throw DataError("token id " + std::to_string(id) + " out of range");
  }
  return id_to_token_[static_cast<std::size_t>(id)];
}

nlohmann::json Vocab::to_json() const {
  return std::vector<std::string>(id_to_token_.begin() + kReserved, id_to_token_.end());
}

Vocab Vocab::from_json(const nlohmann::json& j) {
  Vocab v;
  for (const auto& t : j) {
    auto s = t.get<std::string>();
    if (v.contains(s)) throw DataError("duplicate vocabulary token: " + s);
    v.append(s);
  }
  return v;
}

Vocab build_vocab(std::span<const TokenSeq> seqs, std::size_t max_size, std::size_t min_freq) {
  if (max_size <= Vocab::kReserved) throw ConfigError("vocabulary max_size must exceed 4");
  std::unordered_map<std::string, std::size_t> freq;
  for (const auto& seq : seqs) {
    for (const auto& t : seq.tokens) ++freq[t];
  }
  std::vector<std::pair<std::string, std::size_t>> ranked;
  Vocab base;
  for (auto& [tok, count] : freq) {
    if (count >= min_freq && !base.contains(tok)) ranked.emplace_back(tok, count);
  }
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  const std::size_t cap = max_size - Vocab::kReserved;
  if (ranked.size() > cap) ranked.resize(cap);
  Vocab v;
  for (const auto& entry : ranked) v.append(entry.first);
  return v;
}

std::vector<TokenId> encode_ids(const TokenSeq& seq, const Vocab& vocab, bool add_bos_eos) {
  std::vector<TokenId> out;
  out.reserve(seq.size() + 2);
  if (add_bos_eos) out.push_back(Vocab::kBos);
  for (const auto& t : seq.tokens) out.push_back(vocab.id(t));
  if (add_bos_eos) out.push_back(Vocab::kEos);
  return out;
}

std::vector<std::string> decode_ids(std::span<const TokenId> ids, const Vocab& vocab) {
  std::vector<std::string> out;
  for (TokenId id : ids) {
    if (id >= 0 && static_cast<std::size_t>(id) < Vocab::kReserved) continue;
    out.push_back(vocab.token(id));
  }
  return out;
}

}  // namespace ts3
