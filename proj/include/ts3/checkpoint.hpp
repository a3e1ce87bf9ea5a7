#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ts3/optim.hpp"

namespace ts3::tensor {

inline constexpr char kCheckpointMagic[4] = {'T', 'S', '3', 'W'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedArray {
  std::string name;
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::vector<float> values;
};

/// Binary layout, all integers little-endian u32:
///   "TS3W" | version | array count | per array: name length, UTF-8 name,
///   rows, cols, rows*cols little-endian float32 (row-major).
std::string encode_arrays(const std::vector<NamedArray>& arrays);
std::vector<NamedArray> decode_arrays(const std::string& bytes);

void save_arrays(const std::filesystem::path& path, const std::vector<NamedArray>& arrays);
std::vector<NamedArray> load_arrays(const std::filesystem::path& path);

std::vector<NamedArray> to_arrays(const ParamList& params);
// Copies values by name into existing parameters; shapes and names must match.
void assign_arrays(ParamList& params, const std::vector<NamedArray>& arrays);

}  // namespace ts3::tensor
