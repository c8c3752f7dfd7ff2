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

#include "treeinr/volume.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "treeinr/detail/bytes.hpp"
#include "treeinr/errors.hpp"

namespace treeinr {

namespace {

constexpr char kAxisNames[3] = {'z', 'y', 'x'};

Eigen::Index voxel_count(const Dims& dims) {
  return static_cast<Eigen::Index>(dims[0]) * dims[1] * dims[2];
}

void check_dims(const Dims& dims) {
  for (int a = 0; a < 3; ++a) {
    if (dims[a] <= 0) {
      throw MalformedInputError(std::string("axis ") + kAxisNames[a] + " must be positive, got " +
                                std::to_string(dims[a]));
    }
  }
}

}  // namespace

std::size_t bytes_per_voxel(DType dtype) {
  switch (dtype) {
    case DType::U8: return 1;
    case DType::U16: return 2;
    case DType::F32: return 4;
  }
  return 0;
}

std::string to_string(DType dtype) {
  switch (dtype) {
    case DType::U8: return "u8";
    case DType::U16: return "u16";
    case DType::F32: return "f32";
  }
  return "?";
}

DType parse_dtype(const std::string& name) {
  if (name == "u8") return DType::U8;
  if (name == "u16") return DType::U16;
  if (name == "f32") return DType::F32;
  throw ConfigError("unknown dtype '" + name + "' (expected u8, u16 or f32)");
}

int bit_depth(DType dtype) { return static_cast<int>(8 * bytes_per_voxel(dtype)); }

Volume::Volume(Dims dims, DType dtype, Eigen::ArrayXd voxels)
    : dims_(dims), dtype_(dtype), voxels_(std::move(voxels)) {
  check_dims(dims_);
  if (voxels_.size() != voxel_count(dims_)) {
    throw MalformedInputError("voxel count " + std::to_string(voxels_.size()) +
                              " does not match dims product " + std::to_string(voxel_count(dims_)));
  }
  if (voxels_.isNaN().any()) throw MalformedInputError("volume contains NaN samples");
  if (dtype_ != DType::F32) {
    const double top = std::ldexp(1.0, bit_depth(dtype_)) - 1.0;
    if (((voxels_ < 0.0) || (voxels_ > top) || (voxels_ != voxels_.round())).any()) {
      throw MalformedInputError("intensities must be integers in [0, " + std::to_string(top) +
                                "] for " + to_string(dtype_));
    }
  }
  d_min_ = voxels_.minCoeff();
  d_max_ = voxels_.maxCoeff();
}

std::size_t Volume::raw_bytes() const noexcept {
  return static_cast<std::size_t>(voxels_.size()) * bytes_per_voxel(dtype_);
}

Volume load_raw(std::span<const std::uint8_t> bytes, Dims dims, DType dtype) {
  check_dims(dims);
  const Eigen::Index n = voxel_count(dims);
  const std::size_t expected = static_cast<std::size_t>(n) * bytes_per_voxel(dtype);
  if (bytes.size() != expected) {
    throw MalformedInputError("raw size " + std::to_string(bytes.size()) + " bytes, expected " +
                              std::to_string(expected) + " for " + to_string(dtype) + " dims " +
                              std::to_string(dims[0]) + "x" + std::to_string(dims[1]) + "x" +
                              std::to_string(dims[2]));
  }
  Eigen::ArrayXd voxels(n);
  detail::ByteReader in(bytes);
  for (Eigen::Index i = 0; i < n; ++i) {
    switch (dtype) {
      case DType::U8: voxels[i] = in.get_u8(); break;
      case DType::U16: voxels[i] = in.get_uint<std::uint16_t>(); break;
      case DType::F32: {
        const float v = in.get_f32();
        if (std::isnan(v)) throw MalformedInputError("NaN sample at voxel " + std::to_string(i));
        voxels[i] = v;
        break;
      }
    }
  }
  return Volume(dims, dtype, std::move(voxels));
}

std::vector<std::uint8_t> to_raw_bytes(const Volume& volume) {
  detail::ByteWriter out;
  out.buffer().reserve(volume.raw_bytes());
  for (const double v : volume.voxels()) {
    switch (volume.dtype()) {
      case DType::U8: out.put_u8(static_cast<std::uint8_t>(v)); break;
      case DType::U16: out.put_uint(static_cast<std::uint16_t>(v)); break;
      case DType::F32: out.put_f32(static_cast<float>(v)); break;
    }
  }
  return std::move(out.buffer());
}

std::vector<std::uint8_t> encode_tvol(const Volume& volume) {
  detail::ByteWriter out;
  out.put_bytes("TVOL", 4);
  out.put_u8(1);
  out.put_u8(static_cast<std::uint8_t>(volume.dtype()));
  for (const int d : volume.dims()) out.put_uint(static_cast<std::uint32_t>(d));
  const auto payload = to_raw_bytes(volume);
  out.put_bytes(payload.data(), payload.size());
  return std::move(out.buffer());
}

Volume decode_tvol(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "TVOL", 4) != 0) {
    throw FormatError(FormatErrorKind::BadMagic, "not a .tvol file");
  }
  if (bytes.size() < kTvolHeaderBytes) throw FormatError(FormatErrorKind::Truncated, ".tvol header");
  detail::ByteReader in(bytes);
  in.get_uint<std::uint32_t>();
  const auto version = in.get_u8();
  if (version != 1) {
    throw FormatError(FormatErrorKind::BadVersion, ".tvol version " + std::to_string(version));
  }
  const auto code = in.get_u8();
  if (code > 2) throw FormatError(FormatErrorKind::BadHeader, "dtype code " + std::to_string(code));
  Dims dims{};
  for (auto& d : dims) {
    const auto v = in.get_uint<std::uint32_t>();
    if (v == 0 || v > static_cast<std::uint32_t>(std::numeric_limits<int>::max())) {
      throw FormatError(FormatErrorKind::BadHeader, "axis size " + std::to_string(v));
    }
    d = static_cast<int>(v);
  }
  const auto dtype = static_cast<DType>(code);
  const std::size_t expected =
      static_cast<std::size_t>(voxel_count(dims)) * bytes_per_voxel(dtype);
  if (in.remaining() < expected) {
    throw FormatError(FormatErrorKind::Truncated, ".tvol payload has " +
                                                      std::to_string(in.remaining()) +
                                                      " bytes, expected " + std::to_string(expected));
  }
  if (in.remaining() > expected) {
    throw FormatError(FormatErrorKind::BadHeader, ".tvol has trailing bytes");
  }
  try {
    return load_raw(bytes.subspan(kTvolHeaderBytes), dims, dtype);
  } catch (const MalformedInputError& e) {
    throw FormatError(FormatErrorKind::BadHeader, e.what());
  }
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed on '" + path.string() + "'");
  return bytes;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed on '" + path.string() + "'");
}

double denormalize_intensity(double y, double d_min, double d_max, DType dtype) noexcept {
  double d = d_min;
  if (d_max > d_min) d = d_min + y * (d_max - d_min) / 100.0;
  if (!(d >= d_min)) d = d_min;  // also catches NaN
  if (d > d_max) d = d_max;
  if (dtype != DType::F32) d = std::round(d);
  return d;
}

std::uint64_t morton_encode(std::uint32_t x, std::uint32_t y, std::uint32_t z) noexcept {
  std::uint64_t code = 0;
  for (int bit = 0; bit < 21; ++bit) {
    code |= static_cast<std::uint64_t>((x >> bit) & 1u) << (3 * bit);
    code |= static_cast<std::uint64_t>((y >> bit) & 1u) << (3 * bit + 1);
    code |= static_cast<std::uint64_t>((z >> bit) & 1u) << (3 * bit + 2);
  }
  return code;
}

std::array<std::uint32_t, 3> morton_decode(std::uint64_t code) noexcept {
  std::array<std::uint32_t, 3> xyz{0, 0, 0};
  for (int bit = 0; bit < 21; ++bit) {
    for (int a = 0; a < 3; ++a) {
      xyz[a] |= static_cast<std::uint32_t>((code >> (3 * bit + a)) & 1u) << bit;
    }
  }
  return xyz;
}

std::vector<Region> partition_octree(const Dims& dims, int levels) {
  if (levels < 1) throw ConfigError("level count must be >= 1, got " + std::to_string(levels));
  const int per_axis = 1 << (levels - 1);
  for (int a = 0; a < 3; ++a) {
    if (dims[a] <= 0 || dims[a] % per_axis != 0) {
      throw ConfigError(std::string("axis ") + kAxisNames[a] + " (size " + std::to_string(dims[a]) +
                        ") is not divisible by " + std::to_string(per_axis) + " for " +
                        std::to_string(levels) + " levels");
    }
  }
  const std::array<int, 3> extent{dims[0] / per_axis, dims[1] / per_axis, dims[2] / per_axis};
  const std::size_t leaves = std::size_t{1} << (3 * (levels - 1));
  std::vector<Region> regions(leaves);
  for (std::size_t k = 0; k < leaves; ++k) {
    const auto xyz = morton_decode(k);
    const std::array<int, 3> cell{static_cast<int>(xyz[2]), static_cast<int>(xyz[1]),
                                  static_cast<int>(xyz[0])};
    Region& r = regions[k];
    for (int a = 0; a < 3; ++a) {
      r.lo[a] = cell[a] * extent[a];
      r.hi[a] = r.lo[a] + extent[a];
    }
    r.leaf_index = k;
  }
  return regions;
}

Volume extract_region(const Volume& volume, const Region& region) {
  const auto ext = region.extent();
  Eigen::ArrayXd voxels(region.voxel_count());
  Eigen::Index i = 0;
  for (int z = region.lo[0]; z < region.hi[0]; ++z) {
    for (int y = region.lo[1]; y < region.hi[1]; ++y) {
      const Eigen::Index row = volume.linear_index(z, y, region.lo[2]);
      voxels.segment(i, ext[2]) = volume.voxels().segment(row, ext[2]);
      i += ext[2];
    }
  }
  return Volume(Dims{ext[0], ext[1], ext[2]}, volume.dtype(), std::move(voxels));
}

}  // namespace treeinr
