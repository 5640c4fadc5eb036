// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "brainstack/errors.hpp"

namespace brainstack {

// Little-endian byte packing, independent of host endianness.
class ByteWriter {
 public:
  void u8(uint8_t v) { buf_.push_back(v); }

  void u16(uint16_t v) {
    buf_.push_back(static_cast<uint8_t>(v & 0xff));
    buf_.push_back(static_cast<uint8_t>(v >> 8));
  }

  void u32(uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
  }

  void f32(float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    u32(bits);
  }

  void bytes(const void* p, size_t n) {
    const uint8_t* b = static_cast<const uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }

  const std::vector<uint8_t>& data() const { return buf_; }

  void write_file(const std::string& path) const;

 private:
  std::vector<uint8_t> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::vector<uint8_t> buf) : buf_(std::move(buf)) {}

  static ByteReader from_file(const std::string& path);

  uint8_t u8() {
    need(1);
    return buf_[pos_++];
  }

  uint16_t u16() {
    need(2);
    uint16_t v = static_cast<uint16_t>(buf_[pos_] | (buf_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }

  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(buf_[pos_ + static_cast<size_t>(i)]) << (8 * i);
    pos_ += 4;
    return v;
  }

  float f32() {
    uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }

  void bytes(void* out, size_t n) {
    need(n);
    std::memcpy(out, buf_.data() + pos_, n);
    pos_ += n;
  }

  std::string str(size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(buf_.data()) + pos_, n);
    pos_ += n;
    return s;
  }

  size_t pos() const { return pos_; }
  size_t size() const { return buf_.size(); }
  bool at_end() const { return pos_ == buf_.size(); }

 private:
  void need(size_t n) const {
    if (pos_ + n > buf_.size()) {
      throw FormatError("unexpected end of file at byte " + std::to_string(pos_) +
                        " (need " + std::to_string(n) + " more, have " +
                        std::to_string(buf_.size() - pos_) + ")");
    }
  }

  std::vector<uint8_t> buf_;
  size_t pos_ = 0;
};

}  // namespace brainstack
