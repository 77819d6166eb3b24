#pragma once

#include <string>
#include <utility>
#include <vector>

#include "sbn/tensor.hpp"

namespace sbn {

// Tensor file layout (bit-exact):
//   magic "SBNT" | version 0x01 | dtype 0x02 (f64 little-endian) | ndim u8
//   | ndim x u64 little-endian extents | row-major f64 payload.
void write_tensor(const std::string& path, const Tensor& t);
Tensor read_tensor(const std::string& path);

/// Writes each tensor as <role>.sbnt plus a manifest.json mapping
/// role -> file name.
void save_tensor_dir(const std::string& dir,
                     const std::vector<std::pair<std::string, Tensor>>& roles);
std::vector<std::pair<std::string, Tensor>> load_tensor_dir(const std::string& dir);

}  // namespace sbn
