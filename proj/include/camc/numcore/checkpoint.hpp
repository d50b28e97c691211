// SPDX-License-Identifier: Apache-2.0
#pragma once

// Parameter checkpoint container:
//   magic "CAMCPT01"
//   per parameter: name_len u32 | UTF-8 name | rank u32 | rank x dim u32
//                  | prod(dims) x f32
//   CRC32 of all preceding bytes (u32)
// Little-endian throughout.

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "camc/numcore/tape.hpp"

namespace camc::nc {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NamedTensor {
  std::string name;
  Tensor<float> value;
};

std::vector<std::uint8_t> encode_checkpoint(const std::vector<const Param<float>*>& params);
std::vector<NamedTensor> decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::filesystem::path& path, const std::vector<const Param<float>*>& params);
std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path);

/// Copies values into params by name; names and shapes must all match.
void assign_checkpoint(const std::vector<NamedTensor>& tensors, const std::vector<Param<float>*>& params);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

}  // namespace camc::nc
