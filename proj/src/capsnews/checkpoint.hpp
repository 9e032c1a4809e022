#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "capsnews/tensor.hpp"

namespace capsnews {

/// Binary checkpoint container (see docs/checkpoint-format.md):
///
///   "CAPSCKPT" | u32 version | u32 entry count
///   per entry: u32 name length | name bytes | u32 rank | u64 dims[rank] | f64 values[]
///
/// All integers and floats are little-endian.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedArray {
  std::string name;
  Shape shape;
  std::vector<Real> values;
};

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedArray>& entries);
std::vector<NamedArray> load_checkpoint(const std::filesystem::path& path);

}  // namespace capsnews
