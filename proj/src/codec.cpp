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

#include "treeinr/codec.hpp"

#include <zlib.h>

#include <cmath>
#include <array>
#include <cstring>
#include <thread>

#include "treeinr/detail/bytes.hpp"
#include "treeinr/errors.hpp"

namespace treeinr {

namespace {

// Bytes from the magic through the node count field.
constexpr std::size_t kFixedPrefix = 4 + 1 + 1 + 1 + 1 + 12 + 1 + 8 + 8 + 1 + 4 + 4;
// Param dtype and param count.
constexpr std::size_t kFixedSuffix = 1 + 8;
constexpr std::size_t kCrcBytes = 4;

std::uint32_t crc_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in bounded chunks.
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    const std::size_t n = std::min<std::size_t>(bytes.size() - pos, 1u << 30);
    crc = crc32(crc, bytes.data() + pos, static_cast<uInt>(n));
    pos += n;
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace

std::size_t header_bytes(int levels) {
  TreeConfig cfg;
  cfg.levels = levels;
  return kFixedPrefix + 2 * cfg.node_count() + kFixedSuffix;
}

std::size_t artifact_bytes(int levels, std::size_t param_count) {
  return header_bytes(levels) + 4 * param_count + kCrcBytes;
}

std::vector<std::uint8_t> serialize(const CompressedArtifact& artifact) {
  const ArtifactHeader& h = artifact.header;
  detail::ByteWriter out;
  out.buffer().reserve(artifact_bytes(h.levels, static_cast<std::size_t>(artifact.params.size())));
  out.put_bytes("TINC", 4);
  out.put_u8(kTincVersion);
  out.put_u8(static_cast<std::uint8_t>(h.coord_dim));
  out.put_u8(static_cast<std::uint8_t>(h.levels));
  out.put_u8(static_cast<std::uint8_t>(h.hyper_depth));
  for (const int d : h.dims) out.put_uint(static_cast<std::uint32_t>(d));
  out.put_u8(static_cast<std::uint8_t>(h.dtype));
  out.put_f64(h.d_min);
  out.put_f64(h.d_max);
  out.put_u8(h.intra == IntraLevel::Importance ? 1 : 0);
  out.put_f32(h.inter_ratio);
  out.put_uint(static_cast<std::uint32_t>(h.widths.size()));
  for (const int w : h.widths) out.put_uint(static_cast<std::uint16_t>(w));
  out.put_u8(0);
  out.put_uint(static_cast<std::uint64_t>(artifact.params.size()));
  for (const float p : artifact.params) out.put_f32(p);
  out.put_uint(crc_of(out.buffer()));
  return std::move(out.buffer());
}

CompressedArtifact deserialize(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "TINC", 4) != 0) {
    throw FormatError(FormatErrorKind::BadMagic, "not a .tinc file");
  }
  if (bytes.size() < 5) throw FormatError(FormatErrorKind::Truncated, "missing version byte");
  if (bytes[4] != kTincVersion) {
    throw FormatError(FormatErrorKind::BadVersion, "unsupported .tinc version " +
                                                       std::to_string(bytes[4]));
  }
  if (bytes.size() < kFixedPrefix) {
    throw FormatError(FormatErrorKind::Truncated, "header is " + std::to_string(bytes.size()) +
                                                      " bytes, need at least " +
                                                      std::to_string(kFixedPrefix));
  }

  // Structural pass: only what is needed to locate the CRC.
  detail::ByteReader in(bytes.subspan(5));
  CompressedArtifact a;
  ArtifactHeader& h = a.header;
  h.coord_dim = in.get_u8();
  h.levels = in.get_u8();
  h.hyper_depth = in.get_u8();
  std::array<std::uint32_t, 3> raw_dims{};
  for (auto& d : raw_dims) d = in.get_uint<std::uint32_t>();
  const std::uint8_t dtype_code = in.get_u8();
  h.d_min = in.get_f64();
  h.d_max = in.get_f64();
  const std::uint8_t intra_code = in.get_u8();
  h.inter_ratio = in.get_f32();
  const std::uint32_t nodes = in.get_uint<std::uint32_t>();
  TreeConfig widest;
  widest.levels = TreeConfig::kMaxLevels;
  if (nodes > widest.node_count()) {
    throw FormatError(FormatErrorKind::BadHeader, "node count " + std::to_string(nodes));
  }
  if (in.remaining() < 2 * std::size_t{nodes} + kFixedSuffix) {
    throw FormatError(FormatErrorKind::Truncated, "width table cut short");
  }
  h.widths.resize(nodes);
  for (auto& w : h.widths) w = in.get_uint<std::uint16_t>();
  const std::uint8_t param_dtype = in.get_u8();
  const std::uint64_t count = in.get_uint<std::uint64_t>();
  if (count > in.remaining() / 4 || in.remaining() - 4 * count < kCrcBytes) {
    throw FormatError(FormatErrorKind::Truncated,
                      "payload declares " + std::to_string(count) + " parameters but only " +
                          std::to_string(in.remaining()) + " bytes remain");
  }
  if (in.remaining() - 4 * count > kCrcBytes) {
    throw FormatError(FormatErrorKind::BadHeader, "trailing bytes after checksum");
  }
  a.params.resize(static_cast<Eigen::Index>(count));
  for (auto& p : a.params) p = in.get_f32();
  const std::uint32_t stored_crc = in.get_uint<std::uint32_t>();
  const std::uint32_t actual_crc = crc_of(bytes.first(bytes.size() - kCrcBytes));
  if (stored_crc != actual_crc) {
    throw FormatError(FormatErrorKind::CrcMismatch, "checksum mismatch");
  }

  // Semantic pass.
  auto bad = [](const std::string& what) { throw FormatError(FormatErrorKind::BadHeader, what); };
  if (h.coord_dim != 3) bad("coordinate dimension " + std::to_string(h.coord_dim));
  if (h.levels < 1 || h.levels > TreeConfig::kMaxLevels) bad("levels " + std::to_string(h.levels));
  if (h.hyper_depth < 1) bad("hyper depth 0");
  if (dtype_code > 2) bad("dtype code " + std::to_string(dtype_code));
  if (intra_code > 1) bad("intra-level mode " + std::to_string(intra_code));
  if (param_dtype != 0) bad("parameter dtype " + std::to_string(param_dtype));
  h.dtype = static_cast<DType>(dtype_code);
  h.intra = intra_code == 1 ? IntraLevel::Importance : IntraLevel::Even;
  for (int ax = 0; ax < 3; ++ax) {
    if (raw_dims[ax] == 0 || raw_dims[ax] > (1u << 30)) bad("axis size " + std::to_string(raw_dims[ax]));
    h.dims[ax] = static_cast<int>(raw_dims[ax]);
  }
  if (!(h.d_min <= h.d_max)) bad("intensity range is inverted");
  const TreeConfig cfg = h.tree_config();
  if (nodes != cfg.node_count()) {
    bad("node count " + std::to_string(nodes) + " does not match " + std::to_string(h.levels) +
        " levels");
  }
  for (const int w : h.widths) {
    if (w < 1) bad("zero layer width");
  }
  if (count != total_param_count(cfg, h.widths)) {
    bad("parameter count " + std::to_string(count) + " does not match the width table");
  }
  try {
    partition_octree(h.dims, h.levels);
  } catch (const ConfigError& e) {
    bad(e.what());
  }
  return a;
}

CompressedArtifact make_artifact(const TincNet<float>& net, const Volume& volume,
                                 const AllocationPolicy& policy) {
  CompressedArtifact a;
  ArtifactHeader& h = a.header;
  const TreeConfig& cfg = net.config();
  h.coord_dim = cfg.coord_dim;
  h.levels = cfg.levels;
  h.hyper_depth = cfg.hyper_depth;
  h.dims = volume.dims();
  h.dtype = volume.dtype();
  h.d_min = volume.d_min();
  h.d_max = volume.d_max();
  h.intra = policy.intra;
  h.inter_ratio = static_cast<float>(policy.inter_ratio);
  h.widths = net.widths();
  a.params = net.params();
  return a;
}

TincNet<float> rebuild_net(const CompressedArtifact& artifact) {
  TincNet<float> net(artifact.header.tree_config(), artifact.header.widths);
  if (net.params().size() != artifact.params.size()) {
    throw FormatError(FormatErrorKind::BadHeader, "payload size does not match topology");
  }
  net.params() = artifact.params;
  return net;
}

std::size_t param_budget_for(std::size_t raw_bytes, double target_ratio, std::size_t header) {
  const double available = static_cast<double>(raw_bytes) / target_ratio -
                           static_cast<double>(header) - static_cast<double>(kCrcBytes);
  if (!(available >= 4.0)) return 0;
  return static_cast<std::size_t>(std::floor(available / 4.0));
}

RatioPlan plan_ratio(const Volume& volume, double target_ratio, const TreeConfig& cfg,
                     const AllocationPolicy& policy, std::span<const double> importance) {
  cfg.validate();
  policy.validate(cfg.levels);
  if (!(target_ratio >= 1.0) || !std::isfinite(target_ratio)) {
    throw ConfigError("target ratio must be >= 1");
  }
  RatioPlan plan;
  plan.target_ratio = target_ratio;
  plan.raw_bytes = volume.raw_bytes();
  plan.header_bytes = header_bytes(cfg.levels);
  plan.param_budget = param_budget_for(plan.raw_bytes, target_ratio, plan.header_bytes);

  const std::size_t minimal = minimal_feasible_budget(cfg, policy, importance);
  if (plan.param_budget < minimal) {
    const double max_ratio =
        static_cast<double>(plan.raw_bytes) / static_cast<double>(artifact_bytes(cfg.levels, minimal));
    throw InfeasibleBudgetError(
        "ratio " + std::to_string(target_ratio) + " leaves " + std::to_string(plan.param_budget) +
            " parameters but " + std::to_string(cfg.levels) + " levels need at least " +
            std::to_string(minimal) + "; maximum feasible ratio is " + std::to_string(max_ratio),
        minimal, max_ratio);
  }
  return plan;
}

CompressResult compress(const Volume& volume, const CompressOptions& options, std::ostream* log) {
  options.tree.validate();
  options.policy.validate(options.tree.levels);
  options.train.validate();
  const auto regions = partition_octree(volume.dims(), options.tree.levels);

  std::vector<double> importance;
  if (options.policy.intra == IntraLevel::Importance) {
    importance = importance_weights(volume, regions, options.policy.importance_threshold);
  }

  CompressResult result;
  result.plan = plan_ratio(volume, options.target_ratio, options.tree, options.policy, importance);
  result.tree_plan = plan_tree(result.plan.param_budget, options.tree, options.policy, importance);

  auto net = init_siren<float>(options.tree, result.tree_plan.widths, options.train.seed);
  result.train_report = fit(net, volume, options.train, log);

  result.artifact = make_artifact(net, volume, options.policy);
  result.bytes = serialize(result.artifact);
  result.achieved_ratio =
      static_cast<double>(volume.raw_bytes()) / static_cast<double>(result.bytes.size());
  return result;
}

Eigen::ArrayXd evaluate_dense(const TincNet<float>& net, const Dims& dims, unsigned threads) {
  const auto regions = partition_octree(dims, net.config().levels);
  Eigen::ArrayXd out(static_cast<Eigen::Index>(dims[0]) * dims[1] * dims[2]);
  std::array<std::vector<float>, 3> axis;
  for (int a = 0; a < 3; ++a) {
    axis[a].resize(dims[a]);
    for (int i = 0; i < dims[a]; ++i) axis[a][i] = static_cast<float>(normalize_coord(i, dims[a]));
  }

  auto evaluate_region = [&](const Region& r) {
    const auto ext = r.extent();
    // One z-slab of the region per forward call.
    Eigen::MatrixXf coords(3, static_cast<Eigen::Index>(ext[1]) * ext[2]);
    for (int z = r.lo[0]; z < r.hi[0]; ++z) {
      Eigen::Index col = 0;
      for (int y = r.lo[1]; y < r.hi[1]; ++y) {
        for (int x = r.lo[2]; x < r.hi[2]; ++x, ++col) {
          coords(0, col) = axis[0][z];
          coords(1, col) = axis[1][y];
          coords(2, col) = axis[2][x];
        }
      }
      const auto y_hat = net.forward_leaf(r.leaf_index, coords);
      col = 0;
      for (int y = r.lo[1]; y < r.hi[1]; ++y) {
        const Eigen::Index row = (static_cast<Eigen::Index>(z) * dims[1] + y) * dims[2] + r.lo[2];
        for (int x = 0; x < ext[2]; ++x, ++col) out[row + x] = static_cast<double>(y_hat[col]);
      }
    }
  };

  if (threads <= 1 || regions.size() <= 1) {
    for (const Region& r : regions) evaluate_region(r);
  } else {
    std::vector<std::thread> workers;
    const unsigned count = std::min<unsigned>(threads, static_cast<unsigned>(regions.size()));
    for (unsigned w = 0; w < count; ++w) {
      workers.emplace_back([&, w] {
        for (std::size_t k = w; k < regions.size(); k += count) evaluate_region(regions[k]);
      });
    }
    for (auto& t : workers) t.join();
  }
  return out;
}

Volume decompress(const CompressedArtifact& artifact, unsigned threads) {
  const ArtifactHeader& h = artifact.header;
  const auto net = rebuild_net(artifact);
  Eigen::ArrayXd voxels = evaluate_dense(net, h.dims, threads);
  for (auto& v : voxels) v = denormalize_intensity(v, h.d_min, h.d_max, h.dtype);
  return Volume(h.dims, h.dtype, std::move(voxels));
}

Volume decompress(std::span<const std::uint8_t> bytes, unsigned threads) {
  return decompress(deserialize(bytes), threads);
}

}  // namespace treeinr
