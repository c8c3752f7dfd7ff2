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

#ifndef TREEINR_CODEC_HPP
#define TREEINR_CODEC_HPP

#include <cstdint>
#include <ostream>
#include <span>
#include <vector>

#include "treeinr/net.hpp"
#include "treeinr/octree.hpp"
#include "treeinr/train.hpp"
#include "treeinr/volume.hpp"

namespace treeinr {

/// Everything needed to rebuild the network topology and undo normalization.
struct ArtifactHeader {
  int coord_dim = 3;
  int levels = 1;
  int hyper_depth = 1;
  Dims dims{0, 0, 0};
  DType dtype = DType::U8;
  double d_min = 0.0;
  double d_max = 0.0;
  IntraLevel intra = IntraLevel::Even;
  float inter_ratio = 1.0f;
  std::vector<int> widths;  // breadth-first node order

  TreeConfig tree_config() const { return TreeConfig{coord_dim, levels, hyper_depth}; }
};

/// In-memory image of a .tinc file. `params` is in canonical network order.
struct CompressedArtifact {
  ArtifactHeader header;
  Eigen::VectorXf params;
};

// .tinc layout (little-endian):
//   "TINC" | u8 version=1 | u8 N | u8 L | u8 hyper_depth | u32 x3 dims (z,y,x)
//   | u8 dtype | f64 d_min | f64 d_max | u8 intra mode | f32 inter ratio
//   | u32 node count | u16 x nodes widths | u8 param dtype (0 = f32)
//   | u64 param count | f32 x count params | u32 CRC-32
// The CRC covers every byte before it.
inline constexpr std::uint8_t kTincVersion = 1;

/// Bytes before the payload for an L-level tree.
std::size_t header_bytes(int levels);
/// Total file size for a given parameter count.
std::size_t artifact_bytes(int levels, std::size_t param_count);

std::vector<std::uint8_t> serialize(const CompressedArtifact& artifact);
/// Throws FormatError with kind BadMagic, BadVersion, Truncated, CrcMismatch or
/// BadHeader.
CompressedArtifact deserialize(std::span<const std::uint8_t> bytes);

CompressedArtifact make_artifact(const TincNet<float>& net, const Volume& volume,
                                 const AllocationPolicy& policy);
TincNet<float> rebuild_net(const CompressedArtifact& artifact);

struct RatioPlan {
  double target_ratio = 1.0;
  std::size_t raw_bytes = 0;
  std::size_t header_bytes = 0;
  std::size_t param_budget = 0;
};

/// floor((raw_bytes / ratio - header_bytes - 4) / 4), or 0 when negative.
std::size_t param_budget_for(std::size_t raw_bytes, double target_ratio, std::size_t header_bytes);

/// Parameter budget for compressing `volume` at `target_ratio`. Throws
/// InfeasibleBudgetError carrying the largest feasible ratio when the budget
/// cannot realize the tree under `policy`.
RatioPlan plan_ratio(const Volume& volume, double target_ratio, const TreeConfig& cfg,
                     const AllocationPolicy& policy, std::span<const double> importance = {});

struct CompressOptions {
  double target_ratio = 64.0;
  TreeConfig tree;
  AllocationPolicy policy;
  TrainConfig train;
};

struct CompressResult {
  CompressedArtifact artifact;
  std::vector<std::uint8_t> bytes;
  RatioPlan plan;
  TreePlan tree_plan;
  TrainReport train_report;
  double achieved_ratio = 0.0;
};

/// Plan, allocate, initialize, fit and serialize.
CompressResult compress(const Volume& volume, const CompressOptions& options,
                        std::ostream* log = nullptr);

/// Network output (normalized units) at every voxel, z-major order.
Eigen::ArrayXd evaluate_dense(const TincNet<float>& net, const Dims& dims, unsigned threads = 0);

Volume decompress(const CompressedArtifact& artifact, unsigned threads = 0);
Volume decompress(std::span<const std::uint8_t> bytes, unsigned threads = 0);

}  // namespace treeinr

#endif  // TREEINR_CODEC_HPP
