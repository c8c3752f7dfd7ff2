// Copyright 2026 The treeinr Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef TREEINR_DETAIL_BYTES_HPP
#define TREEINR_DETAIL_BYTES_HPP

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <vector>

namespace treeinr::detail {

// Little-endian append-only writer.
class ByteWriter {
 public:
  void put_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    buffer_.insert(buffer_.end(), p, p + n);
  }
  template <typename UInt>
  void put_uint(UInt value) {
    for (std::size_t i = 0; i < sizeof(UInt); ++i) {
      buffer_.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
    }
  }
  void put_u8(std::uint8_t v) { buffer_.push_back(v); }
  void put_f32(float v) { put_uint(std::bit_cast<std::uint32_t>(v)); }
  void put_f64(double v) { put_uint(std::bit_cast<std::uint64_t>(v)); }

  std::vector<std::uint8_t>& buffer() noexcept { return buffer_; }
  std::size_t size() const noexcept { return buffer_.size(); }

 private:
  std::vector<std::uint8_t> buffer_;
};

// Little-endian cursor. Callers check remaining() before reading.
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }
  std::size_t position() const noexcept { return pos_; }

  template <typename UInt>
  UInt get_uint() {
    UInt value = 0;
    for (std::size_t i = 0; i < sizeof(UInt); ++i) {
      value |= static_cast<UInt>(static_cast<UInt>(bytes_[pos_ + i]) << (8 * i));
    }
    pos_ += sizeof(UInt);
    return value;
  }
  std::uint8_t get_u8() { return bytes_[pos_++]; }
  float get_f32() { return std::bit_cast<float>(get_uint<std::uint32_t>()); }
  double get_f64() { return std::bit_cast<double>(get_uint<std::uint64_t>()); }
  void get_bytes(void* out, std::size_t n) {
    std::memcpy(out, bytes_.data() + pos_, n);
    pos_ += n;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace treeinr::detail

#endif  // TREEINR_DETAIL_BYTES_HPP
