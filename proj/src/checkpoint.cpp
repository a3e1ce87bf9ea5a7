#include "ts3/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "ts3/error.hpp"

namespace ts3::tensor {
namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw DataError("checkpoint truncated at byte " + std::to_string(pos_));
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_arrays(const std::vector<NamedArray>& arrays) {
  std::string out(kCheckpointMagic, 4);
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(arrays.size()));
  for (const auto& a : arrays) {
    if (a.values.size() != static_cast<std::size_t>(a.rows) * a.cols) {
      throw ShapeError("array " + a.name + " has inconsistent size");
    }
    put_u32(out, static_cast<std::uint32_t>(a.name.size()));
    out += a.name;
    put_u32(out, a.rows);
    put_u32(out, a.cols);
    for (float f : a.values) put_u32(out, std::bit_cast<std::uint32_t>(f));
  }
  return out;
}

std::vector<NamedArray> decode_arrays(const std::string& bytes) {
  Reader in(bytes);
  if (in.bytes(4) != std::string(kCheckpointMagic, 4)) throw DataError("not a TS3W checkpoint (bad magic)");
  const auto version = in.u32();
  if (version != kCheckpointVersion) throw DataError("unsupported checkpoint version " + std::to_string(version));
  const auto count = in.u32();
  std::vector<NamedArray> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedArray a;
    a.name = in.bytes(in.u32());
    a.rows = in.u32();
    a.cols = in.u32();
    a.values.resize(static_cast<std::size_t>(a.rows) * a.cols);
    for (float& f : a.values) f = std::bit_cast<float>(in.u32());
    out.push_back(std::move(a));
  }
  if (!in.done()) throw DataError("trailing bytes after checkpoint arrays");
  return out;
}

void save_arrays(const std::filesystem::path& path, const std::vector<NamedArray>& arrays) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  const auto bytes = encode_arrays(arrays);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::vector<NamedArray> load_arrays(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return decode_arrays(buf.str());
}

std::vector<NamedArray> to_arrays(const ParamList& params) {
  std::vector<NamedArray> out;
  out.reserve(params.size());
  for (const auto& [name, t] : params) {
    NamedArray a{name, static_cast<std::uint32_t>(t.rows()), static_cast<std::uint32_t>(t.cols()), {}};
    a.values.reserve(t.size());
    for (double v : t.values()) a.values.push_back(static_cast<float>(v));
    out.push_back(std::move(a));
  }
  return out;
}

void assign_arrays(ParamList& params, const std::vector<NamedArray>& arrays) {
  std::map<std::string, const NamedArray*> by_name;
  for (const auto& a : arrays) by_name[a.name] = &a;
  for (auto& [name, t] : params) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw DataError("checkpoint lacks array " + name);
    const NamedArray& a = *it->second;
    if (a.rows != t.rows() || a.cols != t.cols()) {
      throw ShapeError("checkpoint array " + name + " is " + std::to_string(a.rows) + "x" + std::to_string(a.cols) +
                       ", model expects " + t.shape_string());
    }
    auto dst = t.mutable_values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<double>(a.values[i]);
  }
  if (by_name.size() != params.size()) throw DataError("checkpoint holds arrays the model does not define");
}

}  // namespace ts3::tensor
