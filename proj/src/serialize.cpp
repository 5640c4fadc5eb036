// SPDX-License-Identifier: Apache-2.0
#include "brainstack/serialize.hpp"

#include <cstdio>

namespace brainstack {

void ByteWriter::write_file(const std::string& path) const {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw FormatError("cannot open '" + path + "' for writing");
  size_t n = buf_.size();
  size_t written = n ? std::fwrite(buf_.data(), 1, n, f) : 0;
  int rc = std::fclose(f);
  if (written != n || rc != 0) {
    throw FormatError("short write to '" + path + "'");
  }
}

ByteReader ByteReader::from_file(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw FormatError("cannot open '" + path + "' for reading");
  std::fseek(f, 0, SEEK_END);
  long len = std::ftell(f);
  std::fseek(f, 0, SEEK_SET);
  std::vector<uint8_t> buf(static_cast<size_t>(len > 0 ? len : 0));
  size_t got = buf.empty() ? 0 : std::fread(buf.data(), 1, buf.size(), f);
  std::fclose(f);
  if (got != buf.size()) throw FormatError("short read from '" + path + "'");
  return ByteReader(std::move(buf));
}

}  // namespace brainstack
