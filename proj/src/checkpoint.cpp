// SPDX-License-Identifier: Apache-2.0
#include "brainstack/checkpoint.hpp"

#include <set>

#include "brainstack/serialize.hpp"

namespace brainstack {

void save_checkpoint(const std::string& path, const std::vector<NamedTensor>& entries) {
  std::set<std::string> seen;
  ByteWriter w;
  w.bytes("BSTK", 4);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<uint32_t>(entries.size()));
  for (const NamedTensor& e : entries) {
    if (e.name.empty() || e.name.size() > 0xffff) {
      throw FormatError("checkpoint entry name length out of range: '" + e.name + "'");
    }
    if (!seen.insert(e.name).second) {
      throw FormatError("duplicate checkpoint entry name '" + e.name + "'");
    }
    if (e.value.rank() > 255) throw FormatError("checkpoint entry rank out of range");
    w.u16(static_cast<uint16_t>(e.name.size()));
    w.bytes(e.name.data(), e.name.size());
    w.u8(static_cast<uint8_t>(e.value.rank()));
    for (int i = 0; i < e.value.rank(); ++i) {
      int64_t d = e.value.dim(i);
      if (d < 0 || d > 0xffffffffll) throw FormatError("checkpoint dimension out of range");
      w.u32(static_cast<uint32_t>(d));
    }
    for (int64_t i = 0; i < e.value.numel(); ++i) {
      w.f32(static_cast<float>(e.value[i]));
    }
  }
  w.write_file(path);
}

std::vector<NamedTensor> load_checkpoint(const std::string& path) {
  ByteReader r = ByteReader::from_file(path);
  char magic[4];
  r.bytes(magic, 4);
  if (std::string(magic, 4) != "BSTK") {
    throw FormatError("'" + path + "' is not a checkpoint file (bad magic)");
  }
  uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  uint32_t count = r.u32();
  std::vector<NamedTensor> entries;
  entries.reserve(count);
  std::set<std::string> seen;
  for (uint32_t i = 0; i < count; ++i) {
    uint16_t name_len = r.u16();
    std::string name = r.str(name_len);
    if (name.empty()) throw FormatError("empty checkpoint entry name at byte " + std::to_string(r.pos()));
    if (!seen.insert(name).second) {
      throw FormatError("duplicate checkpoint entry name '" + name + "'");
    }
    uint8_t rank = r.u8();
    std::vector<int64_t> shape(rank);
    for (uint8_t d = 0; d < rank; ++d) shape[d] = static_cast<int64_t>(r.u32());
    Tensor t(shape);
    for (int64_t k = 0; k < t.numel(); ++k) t[k] = static_cast<double>(r.f32());
    entries.push_back({std::move(name), std::move(t)});
  }
  if (!r.at_end()) {
    throw FormatError("trailing bytes after last checkpoint entry at byte " +
                      std::to_string(r.pos()));
  }
  return entries;
}

}  // namespace brainstack
