#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "derrt/numerics/tensor.hpp"

namespace derrt::num {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// Contents of a model parameter file: a JSON manifest describing the
/// architecture plus a table of named tensors.
struct ParamFile {
  std::string manifest_json;
  std::vector<NamedTensor> tensors;

  const Tensor& get(const std::string& name) const;
};

// Layout (all integers little-endian):
//   magic "DERRTPRM" | u32 version | u32 manifest_len | manifest bytes |
//   u32 tensor_count | per tensor: u32 name_len, name, u32 rank,
//   u64 dims[rank], f64 values[prod(dims)]
inline constexpr char kParamMagic[8] = {'D', 'E', 'R', 'R', 'T', 'P', 'R', 'M'};
inline constexpr std::uint32_t kParamVersion = 1;

std::string encode_params(const ParamFile& file);
ParamFile decode_params(const std::string& bytes);

void write_params(const std::filesystem::path& path, const ParamFile& file);
ParamFile read_params(const std::filesystem::path& path);

}  // namespace derrt::num
