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

#include "treeinr/octree.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "treeinr/errors.hpp"

namespace treeinr {

namespace {

constexpr int kMaxWidth = 65535;  // widths are stored as u16

// floor() that forgives representation error in products like 1000 * 1.2.
std::size_t floor_budget(double x) {
  if (x <= 0.0) return 0;
  return static_cast<std::size_t>(std::floor(x * (1.0 + 1e-12) + 1e-9));
}

}  // namespace

void TreeConfig::validate() const {
  if (levels < 1 || levels > kMaxLevels) {
    throw ConfigError("levels must be in [1, " + std::to_string(kMaxLevels) + "], got " +
                      std::to_string(levels));
  }
  if (hyper_depth < 1) throw ConfigError("hyper depth must be >= 1");
  if (coord_dim < 1) throw ConfigError("coordinate dimension must be >= 1");
}

std::size_t TreeConfig::node_count() const noexcept { return level_offset(levels + 1); }

int TreeConfig::level_of(std::size_t node) noexcept {
  int level = 1;
  while (node >= level_offset(level + 1)) ++level;
  return level;
}

std::size_t TreeConfig::parent(std::size_t node) noexcept {
  const int level = level_of(node);
  return level_offset(level - 1) + (node - level_offset(level)) / kBranching;
}

std::size_t TreeConfig::first_child(std::size_t node) noexcept {
  const int level = level_of(node);
  return level_offset(level + 1) + (node - level_offset(level)) * kBranching;
}

std::vector<std::size_t> TreeConfig::ancestor_path(std::size_t leaf) const {
  std::vector<std::size_t> path(static_cast<std::size_t>(levels));
  std::size_t node = leaf_node(leaf);
  for (int l = levels; l >= 1; --l) {
    path[static_cast<std::size_t>(l - 1)] = node;
    if (l > 1) node = parent(node);
  }
  return path;
}

void AllocationPolicy::validate(int levels) const {
  if (!(inter_ratio > 0.0) || !std::isfinite(inter_ratio)) {
    throw ConfigError("inter-level ratio must be positive");
  }
  if (!level_ratios.empty()) {
    if (static_cast<int>(level_ratios.size()) != levels - 1) {
      throw ConfigError("per-level ratios need " + std::to_string(levels - 1) + " entries, got " +
                        std::to_string(level_ratios.size()));
    }
    for (const double r : level_ratios) {
      if (!(r > 0.0) || !std::isfinite(r)) throw ConfigError("per-level ratios must be positive");
    }
  }
  if (!(floor_fraction > 0.0 && floor_fraction <= 1.0)) {
    throw ConfigError("floor fraction must be in (0, 1]");
  }
}

double AllocationPolicy::ratio_for_level(int level) const {
  if (!level_ratios.empty()) return level_ratios[static_cast<std::size_t>(level - 2)];
  return inter_ratio;
}

int shared_segment_count(std::size_t i, std::size_t j, int levels) noexcept {
  // Leaf ordinals are z-curve codes: each octal digit picks a child, most
  // significant digit first below the root.
  int shared = 1;
  for (int digit = levels - 2; digit >= 0; --digit) {
    if (((i >> (3 * digit)) & 7u) != ((j >> (3 * digit)) & 7u)) break;
    ++shared;
  }
  return shared;
}

std::size_t owned_param_count(const TreeConfig& cfg, std::size_t node, int width,
                              int parent_width) noexcept {
  const std::size_t w = static_cast<std::size_t>(width);
  const std::size_t hidden = w * w + w;
  std::size_t count = 0;
  if (node == 0) {
    count = static_cast<std::size_t>(cfg.coord_dim) * w + w +
            static_cast<std::size_t>(cfg.hyper_depth) * hidden;
  } else {
    count = static_cast<std::size_t>(parent_width) * w + w +
            static_cast<std::size_t>(cfg.hyper_depth - 1) * hidden;
  }
  if (cfg.is_leaf(node)) count += w + 1;
  return count;
}

std::size_t total_param_count(const TreeConfig& cfg, std::span<const int> widths) {
  std::size_t total = 0;
  for (std::size_t n = 0; n < widths.size(); ++n) {
    const int parent_width = n == 0 ? 0 : widths[TreeConfig::parent(n)];
    total += owned_param_count(cfg, n, widths[n], parent_width);
  }
  return total;
}

std::size_t minimal_param_count(const TreeConfig& cfg) {
  const std::vector<int> ones(cfg.node_count(), 1);
  return total_param_count(cfg, ones);
}

std::vector<NodeBudget> allocate_budgets(std::size_t total_params, const TreeConfig& cfg,
                                         const AllocationPolicy& policy,
                                         std::span<const double> importance) {
  cfg.validate();
  policy.validate(cfg.levels);
  if (total_params < minimal_param_count(cfg)) {
    throw InfeasibleBudgetError("budget of " + std::to_string(total_params) +
                                    " parameters cannot afford a width-1 tree",
                                minimal_feasible_budget(cfg, policy, importance));
  }

  std::vector<double> multiplier(static_cast<std::size_t>(cfg.levels) + 1, 1.0);
  double denominator = 1.0;
  for (int l = 2; l <= cfg.levels; ++l) {
    multiplier[l] = multiplier[l - 1] * policy.ratio_for_level(l);
    denominator += static_cast<double>(TreeConfig::nodes_at_level(l)) * multiplier[l];
  }
  const double root_budget = static_cast<double>(total_params) / denominator;

  std::vector<NodeBudget> budgets(cfg.node_count());
  for (std::size_t n = 0; n < budgets.size(); ++n) {
    const int level = TreeConfig::level_of(n);
    budgets[n] = NodeBudget{n, level, floor_budget(root_budget * multiplier[level]), 0};
  }

  if (policy.intra == IntraLevel::Importance) {
    const std::size_t leaves = cfg.leaf_count();
    if (importance.size() != leaves) {
      throw ConfigError("importance mode needs " + std::to_string(leaves) + " leaf weights, got " +
                        std::to_string(importance.size()));
    }
    double weight_sum = 0.0;
    for (const double w : importance) {
      if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("importance weights must be >= 0");
      weight_sum += w;
    }
    if (weight_sum <= 0.0) {
      std::clog << "warning: all importance weights are zero; using even allocation\n";
    } else {
      // Shares of the even-mode level total; the flooring remainder goes to the
      // largest fractional parts, lower leaf index first on ties.
      const std::size_t offset = TreeConfig::level_offset(cfg.levels);
      const std::size_t even = budgets[offset].param_budget;
      const std::size_t level_total = even * leaves;
      const double floor_share = policy.floor_fraction * static_cast<double>(even);
      const double spread = static_cast<double>(level_total) - floor_share * static_cast<double>(leaves);
      std::vector<double> fraction(leaves);
      std::size_t assigned = 0;
      for (std::size_t k = 0; k < leaves; ++k) {
        const double share = floor_share + spread * importance[k] / weight_sum;
        const std::size_t whole = std::min(floor_budget(share), level_total - assigned);
        fraction[k] = share - static_cast<double>(whole);
        budgets[offset + k].param_budget = whole;
        assigned += whole;
      }
      std::vector<std::size_t> order(leaves);
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return fraction[a] > fraction[b]; });
      for (std::size_t i = 0; assigned < level_total; i = (i + 1) % leaves, ++assigned) {
        ++budgets[offset + order[i]].param_budget;
      }
    }
  }
  return budgets;
}

std::vector<int> solve_widths(std::span<NodeBudget> budgets, const TreeConfig& cfg) {
  cfg.validate();
  if (budgets.size() != cfg.node_count()) {
    throw ConfigError("expected " + std::to_string(cfg.node_count()) + " node budgets, got " +
                      std::to_string(budgets.size()));
  }
  std::vector<int> widths(budgets.size(), 0);
  for (std::size_t n = 0; n < budgets.size(); ++n) {
    const int parent_width = n == 0 ? 0 : widths[TreeConfig::parent(n)];
    const std::size_t budget = budgets[n].param_budget;
    int w = 0;
    while (w < kMaxWidth && owned_param_count(cfg, n, w + 1, parent_width) <= budget) ++w;
    if (w == 0) {
      throw InfeasibleBudgetError(
          "node " + std::to_string(n) + " (level " + std::to_string(budgets[n].level) +
              ") has budget " + std::to_string(budget) + " but width 1 needs " +
              std::to_string(owned_param_count(cfg, n, 1, parent_width)),
          minimal_param_count(cfg));
    }
    widths[n] = w;
    budgets[n].solved_width = w;
  }
  return widths;
}

std::vector<int> absorb_slack(std::span<NodeBudget> budgets, const TreeConfig& cfg,
                              std::size_t total_params) {
  std::vector<int> widths(budgets.size());
  for (std::size_t n = 0; n < budgets.size(); ++n) widths[n] = budgets[n].solved_width;
  std::size_t total = total_param_count(cfg, widths);

  auto owned = [&](std::size_t n, int w) {
    return owned_param_count(cfg, n, w, n == 0 ? 0 : widths[TreeConfig::parent(n)]);
  };

  for (;;) {
    std::size_t best = budgets.size();
    std::size_t best_delta = std::numeric_limits<std::size_t>::max();
    long long best_leftover = 0;
    for (std::size_t n = 0; n < budgets.size(); ++n) {
      if (widths[n] >= kMaxWidth) continue;
      std::size_t delta = owned(n, widths[n] + 1) - owned(n, widths[n]);
      if (!cfg.is_leaf(n)) {
        // Each child's first layer grows by one input column.
        const std::size_t child = TreeConfig::first_child(n);
        for (int c = 0; c < TreeConfig::kBranching; ++c) {
          delta += static_cast<std::size_t>(widths[child + c]);
        }
      }
      if (total + delta > total_params) continue;
      const long long leftover = static_cast<long long>(budgets[n].param_budget) -
                                 static_cast<long long>(owned(n, widths[n]));
      if (delta < best_delta || (delta == best_delta && leftover > best_leftover)) {
        best = n;
        best_delta = delta;
        best_leftover = leftover;
      }
    }
    if (best == budgets.size()) break;
    ++widths[best];
    total += best_delta;
  }

  for (std::size_t n = 0; n < budgets.size(); ++n) {
    budgets[n].param_budget = std::max(budgets[n].param_budget, owned(n, widths[n]));
    budgets[n].solved_width = widths[n];
  }
  return widths;
}

std::vector<double> importance_weights(const Volume& volume, std::span<const Region> regions,
                                       double threshold) {
  std::vector<double> weights;
  weights.reserve(regions.size());
  for (const Region& r : regions) {
    std::size_t above = 0;
    for (int z = r.lo[0]; z < r.hi[0]; ++z) {
      for (int y = r.lo[1]; y < r.hi[1]; ++y) {
        const Eigen::Index row = volume.linear_index(z, y, r.lo[2]);
        above += static_cast<std::size_t>(
            (volume.voxels().segment(row, r.hi[2] - r.lo[2]) > threshold).count());
      }
    }
    weights.push_back(static_cast<double>(above) / static_cast<double>(r.voxel_count()));
  }
  return weights;
}

TreePlan plan_tree(std::size_t total_params, const TreeConfig& cfg, const AllocationPolicy& policy,
                   std::span<const double> importance) {
  TreePlan plan;
  try {
    plan.budgets = allocate_budgets(total_params, cfg, policy, importance);
    solve_widths(plan.budgets, cfg);
  } catch (const InfeasibleBudgetError& e) {
    throw InfeasibleBudgetError(e.what(), minimal_feasible_budget(cfg, policy, importance));
  }
  plan.widths = absorb_slack(plan.budgets, cfg, total_params);
  plan.realized_params = total_param_count(cfg, plan.widths);
  return plan;
}

std::size_t minimal_feasible_budget(const TreeConfig& cfg, const AllocationPolicy& policy,
                                    std::span<const double> importance) {
  auto feasible = [&](std::size_t total) {
    if (total < minimal_param_count(cfg)) return false;
    try {
      auto budgets = allocate_budgets(total, cfg, policy, importance);
      solve_widths(budgets, cfg);
      return true;
    } catch (const InfeasibleBudgetError&) {
      return false;
    }
  };
  std::size_t lo = minimal_param_count(cfg);
  if (feasible(lo)) return lo;
  std::size_t hi = lo * 2;
  while (!feasible(hi)) {
    lo = hi;
    hi *= 2;
    if (hi > (std::size_t{1} << 40)) throw ConfigError("no feasible budget for this policy");
  }
  // lo infeasible, hi feasible
  while (hi - lo > 1) {
    const std::size_t mid = lo + (hi - lo) / 2;
    (feasible(mid) ? hi : lo) = mid;
  }
  return hi;
}

}  // namespace treeinr
