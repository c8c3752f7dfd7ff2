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

#ifndef TREEINR_VOLUME_HPP
#define TREEINR_VOLUME_HPP

#include <Eigen/Core>

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace treeinr {

enum class DType : std::uint8_t { U8 = 0, U16 = 1, F32 = 2 };

std::size_t bytes_per_voxel(DType dtype);
std::string to_string(DType dtype);
/// Parses "u8", "u16" or "f32"; throws ConfigError otherwise.
DType parse_dtype(const std::string& name);
/// Bit depth used for integer peaks (8, 16); 32 for f32.
int bit_depth(DType dtype);

/// Axis sizes in (z, y, x) order. Voxels are stored z-major, x fastest.
using Dims = std::array<int, 3>;

/// Dense voxel grid. Intensities are kept as doubles regardless of dtype;
/// integer dtypes only ever hold integral values inside the dtype range.
class Volume {
 public:
  Volume() = default;
  /// Takes ownership of `voxels` and scans them for d_min/d_max.
  Volume(Dims dims, DType dtype, Eigen::ArrayXd voxels);

  const Dims& dims() const noexcept { return dims_; }
  DType dtype() const noexcept { return dtype_; }
  const Eigen::ArrayXd& voxels() const noexcept { return voxels_; }
  double d_min() const noexcept { return d_min_; }
  double d_max() const noexcept { return d_max_; }

  Eigen::Index size() const noexcept { return voxels_.size(); }
  /// Raw payload size in bytes (voxel count times bytes per voxel).
  std::size_t raw_bytes() const noexcept;

  Eigen::Index linear_index(int z, int y, int x) const noexcept {
    return (static_cast<Eigen::Index>(z) * dims_[1] + y) * dims_[2] + x;
  }
  double at(int z, int y, int x) const noexcept { return voxels_[linear_index(z, y, x)]; }

 private:
  Dims dims_{0, 0, 0};
  DType dtype_ = DType::U8;
  Eigen::ArrayXd voxels_;
  double d_min_ = 0.0;
  double d_max_ = 0.0;
};

/// Half-open box of voxels [lo, hi) in (z, y, x) order.
struct Region {
  std::array<int, 3> lo{0, 0, 0};
  std::array<int, 3> hi{0, 0, 0};
  std::size_t leaf_index = 0;

  std::array<int, 3> extent() const noexcept { return {hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]}; }
  Eigen::Index voxel_count() const noexcept {
    return static_cast<Eigen::Index>(hi[0] - lo[0]) * (hi[1] - lo[1]) * (hi[2] - lo[2]);
  }
  bool contains(int z, int y, int x) const noexcept {
    return z >= lo[0] && z < hi[0] && y >= lo[1] && y < hi[1] && x >= lo[2] && x < hi[2];
  }
};

/// Decodes headerless little-endian bytes. Throws MalformedInputError on a size
/// mismatch or a NaN sample.
Volume load_raw(std::span<const std::uint8_t> bytes, Dims dims, DType dtype);
/// Encodes voxels as little-endian bytes of the volume's dtype.
std::vector<std::uint8_t> to_raw_bytes(const Volume& volume);

// .tvol container: "TVOL", u8 version (1), u8 dtype code, 3 x u32 dims (z, y, x),
// then the raw payload.
inline constexpr std::size_t kTvolHeaderBytes = 18;
std::vector<std::uint8_t> encode_tvol(const Volume& volume);
Volume decode_tvol(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

/// Grid index to [-1, 1]; endpoints map to exactly -1 and +1, size-1 axes to 0.
inline double normalize_coord(int index, int size) noexcept {
  if (size <= 1) return 0.0;
  return -1.0 + 2.0 * static_cast<double>(index) / static_cast<double>(size - 1);
}

/// Raw intensity to [0, 100]. Constant ranges map to 0.
inline double normalize_intensity(double d, double d_min, double d_max) noexcept {
  if (d_max <= d_min) return 0.0;
  return 100.0 * (d - d_min) / (d_max - d_min);
}

/// Inverse of normalize_intensity, clamped to [d_min, d_max] and rounded to the
/// nearest integer for integer dtypes.
double denormalize_intensity(double y, double d_min, double d_max, DType dtype) noexcept;

/// Interleaves the bits of (x, y, z) with x least significant.
std::uint64_t morton_encode(std::uint32_t x, std::uint32_t y, std::uint32_t z) noexcept;
/// Inverse of morton_encode; returns {x, y, z}.
std::array<std::uint32_t, 3> morton_decode(std::uint64_t code) noexcept;

/// Splits the grid into 8^(levels-1) equal leaf regions, returned in z-curve
/// order (result[k].leaf_index == k). Throws ConfigError naming the first axis
/// not divisible by 2^(levels-1).
std::vector<Region> partition_octree(const Dims& dims, int levels);

/// Copies a sub-box out of `volume` into a standalone volume of the same dtype.
Volume extract_region(const Volume& volume, const Region& region);

}  // namespace treeinr

#endif  // TREEINR_VOLUME_HPP
