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

#ifndef TREEINR_OCTREE_HPP
#define TREEINR_OCTREE_HPP

#include <cstddef>
#include <span>
#include <vector>

#include "treeinr/volume.hpp"

namespace treeinr {

/// Geometry of a complete octree of hyper layers.
///
/// Nodes are numbered breadth-first. Level l (1-based, root = 1) holds 8^(l-1)
/// nodes; within a level, nodes are in z-curve order, so the children of the
/// node with in-level index j have in-level indices 8j .. 8j+7. The leaves are
/// level `levels` and their in-level index is the leaf ordinal.
struct TreeConfig {
  int coord_dim = 3;
  int levels = 1;
  int hyper_depth = 1;

  static constexpr int kBranching = 8;
  static constexpr int kMaxLevels = 5;

  /// Throws ConfigError unless 1 <= levels <= 5, hyper_depth >= 1, coord_dim >= 1.
  void validate() const;

  std::size_t node_count() const noexcept;
  std::size_t leaf_count() const noexcept { return nodes_at_level(levels); }
  static std::size_t nodes_at_level(int level) noexcept { return std::size_t{1} << (3 * (level - 1)); }
  /// Breadth-first id of the first node on `level`.
  static std::size_t level_offset(int level) noexcept { return (nodes_at_level(level) - 1) / 7; }
  static int level_of(std::size_t node) noexcept;
  /// Parent node id; the root has no parent (precondition: node > 0).
  static std::size_t parent(std::size_t node) noexcept;
  static std::size_t first_child(std::size_t node) noexcept;

  bool is_leaf(std::size_t node) const noexcept { return level_of(node) == levels; }
  std::size_t leaf_node(std::size_t leaf) const noexcept { return level_offset(levels) + leaf; }
  /// Node ids on the root-to-leaf path, index 0 = root (level 1).
  std::vector<std::size_t> ancestor_path(std::size_t leaf) const;
};

enum class IntraLevel { Even, Importance };

struct AllocationPolicy {
  /// Per-node budget ratio between adjacent levels, applied uniformly.
  double inter_ratio = 1.0;
  /// Optional per-level override; entry i is the ratio of level i+2 to level i+1.
  std::vector<double> level_ratios;
  IntraLevel intra = IntraLevel::Even;
  /// Raw-intensity threshold for importance weights.
  double importance_threshold = 0.0;
  /// Minimum leaf share in importance mode, as a fraction of the even share.
  double floor_fraction = 0.1;

  void validate(int levels) const;
  /// Ratio r^l between `level` and `level - 1` (level >= 2).
  double ratio_for_level(int level) const;
};

struct NodeBudget {
  std::size_t node_id = 0;
  int level = 1;
  std::size_t param_budget = 0;
  int solved_width = 0;
};

/// Level of the lowest common ancestor of leaves i and j (root = 1); equals the
/// number of hidden-layer segments the two leaf networks share.
int shared_segment_count(std::size_t i, std::size_t j, int levels) noexcept;

/// Learnable scalars owned by `node` at `width` given its parent's width.
/// The root owns the input layer, leaves own the output layer.
std::size_t owned_param_count(const TreeConfig& cfg, std::size_t node, int width,
                              int parent_width) noexcept;
/// Sum of owned counts over the whole tree; widths indexed by node id.
std::size_t total_param_count(const TreeConfig& cfg, std::span<const int> widths);
/// Parameter count of the all-width-1 network.
std::size_t minimal_param_count(const TreeConfig& cfg);

/// Splits `total_params` into per-node budgets following the level-ratio law,
/// then (importance mode) redistributes the leaf level by `importance`.
/// Throws InfeasibleBudgetError when the total cannot afford width 1 everywhere.
std::vector<NodeBudget> allocate_budgets(std::size_t total_params, const TreeConfig& cfg,
                                         const AllocationPolicy& policy,
                                         std::span<const double> importance = {});

/// Largest width per node that fits its budget, solved parents first. Fills
/// `solved_width` in place and returns the widths indexed by node id.
std::vector<int> solve_widths(std::span<NodeBudget> budgets, const TreeConfig& cfg);

/// Spends leftover budget on single-unit width increments, cheapest first, while
/// the tree total stays within `total_params`. Raises node budgets so that
/// solve_widths on the result reproduces the returned widths.
std::vector<int> absorb_slack(std::span<NodeBudget> budgets, const TreeConfig& cfg,
                              std::size_t total_params);

/// Fraction of voxels per leaf region with raw intensity above `threshold`.
std::vector<double> importance_weights(const Volume& volume, std::span<const Region> regions,
                                       double threshold);

struct TreePlan {
  std::vector<NodeBudget> budgets;
  std::vector<int> widths;
  std::size_t realized_params = 0;
};

/// allocate_budgets + solve_widths + absorb_slack. On failure throws
/// InfeasibleBudgetError carrying the smallest total this policy can realize.
TreePlan plan_tree(std::size_t total_params, const TreeConfig& cfg, const AllocationPolicy& policy,
                   std::span<const double> importance = {});

/// Smallest total budget for which plan_tree succeeds under `policy`.
std::size_t minimal_feasible_budget(const TreeConfig& cfg, const AllocationPolicy& policy,
                                    std::span<const double> importance = {});

}  // namespace treeinr

#endif  // TREEINR_OCTREE_HPP
