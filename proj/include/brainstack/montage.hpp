// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <string>
#include <vector>

#include "brainstack/tensor.hpp"

namespace brainstack {

// The seven anatomical regions, in canonical order. This order is used for
// expert indexing, report columns and checkpoint entry names everywhere.
enum class Region : int {
  kPrefrontal = 0,
  kFrontal,
  kCentral,
  kLeftTemporal,
  kRightTemporal,
  kParietal,
  kOccipital,
};

inline constexpr int kNumRegions = 7;

const char* region_name(Region r);                  // "Prefrontal", ...
const char* region_column(Region r);                // "prefrontal", "ltemporal", ...
bool region_from_name(const std::string& name, Region* out);

struct Montage {
  std::vector<std::string> channel_names;
  int channel_count() const { return static_cast<int>(channel_names.size()); }
  int index_of(const std::string& name) const;  // -1 if absent
};

struct RegionPartition {
  std::array<std::vector<int>, kNumRegions> indices;

  const std::vector<int>& of(Region r) const {
    return indices[static_cast<size_t>(static_cast<int>(r))];
  }
  std::vector<int>& of(Region r) {
    return indices[static_cast<size_t>(static_cast<int>(r))];
  }
};

struct MontageSpec {
  Montage montage;
  RegionPartition partition;
};

// Region-map text format, line oriented:
//   channels: <name> <name> ...     (order defines channel indices)
//   region <RegionName>: <name> ...
// '#' starts a comment; blank lines ignored. Channels listed in no region
// are legal and feed only the global expert.
MontageSpec parse_montage(const std::string& text);
std::string montage_to_text(const MontageSpec& spec);

// Every violated partition invariant as a human-readable string; empty means
// the partition is valid for a trial with C channels.
std::vector<std::string> validate_partition(const RegionPartition& partition, int C);

// Rows of x (C x T) selected in the order listed by the partition.
Tensor slice_region(const Tensor& x, const RegionPartition& partition, Region r);

// Shipped defaults: a 16-channel desk montage and a 64-channel 10-10 layout.
const std::string& default_montage16_text();
const std::string& default_montage64_text();

}  // namespace brainstack
