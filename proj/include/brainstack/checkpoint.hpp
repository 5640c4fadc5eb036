// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "brainstack/tensor.hpp"

namespace brainstack {

struct NamedTensor {
  std::string name;
  Tensor value;
};

// Checkpoint container: magic "BSTK", format version, then a flat list of
// named tensors. Values are stored as little-endian f32; loading widens back
// to f64, so save -> load -> save is byte-identical.
//
// Layout per entry: u16 name length, UTF-8 name bytes, u8 rank, rank x u32
// dims, numel x f32 values.
inline constexpr uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const std::vector<NamedTensor>& entries);
std::vector<NamedTensor> load_checkpoint(const std::string& path);

}  // namespace brainstack
