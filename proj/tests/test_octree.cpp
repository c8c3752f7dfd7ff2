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


#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "treeinr/errors.hpp"
#include "treeinr/octree.hpp"

namespace treeinr {
namespace {

TreeConfig tree(int levels, int hyper_depth = 1) { return TreeConfig{3, levels, hyper_depth}; }

std::vector<std::size_t> budget_values(const std::vector<NodeBudget>& b) {
  std::vector<std::size_t> out;
  for (const auto& n : b) out.push_back(n.param_budget);
  return out;
}

TEST_SUITE("octree") {

TEST_CASE("node numbering") {
  const TreeConfig cfg = tree(3);
  CHECK(cfg.node_count() == 73);
  CHECK(cfg.leaf_count() == 64);
  CHECK(TreeConfig::level_offset(1) == 0);
  CHECK(TreeConfig::level_offset(2) == 1);
  CHECK(TreeConfig::level_offset(3) == 9);
  for (std::size_t n = 0; n < cfg.node_count(); ++n) CHECK(TreeConfig::level_of(n) == oracle::level_of(n));
  for (std::size_t leaf = 0; leaf < cfg.leaf_count(); ++leaf) {
    CHECK(cfg.ancestor_path(leaf) == oracle::path_to_leaf(leaf, 3));
  }
  for (std::size_t n = 1; n < cfg.node_count(); ++n) {
    const std::size_t p = TreeConfig::parent(n);
    CHECK(n >= TreeConfig::first_child(p));
    CHECK(n < TreeConfig::first_child(p) + 8);
  }
}

TEST_CASE("TreeConfig validation") {
  CHECK_THROWS_AS(tree(0).validate(), ConfigError);
  CHECK_THROWS_AS(tree(6).validate(), ConfigError);
  CHECK_THROWS_AS(tree(2, 0).validate(), ConfigError);
  CHECK_NOTHROW(tree(5, 3).validate());
}

TEST_CASE("shared_segment_count examples") {
  CHECK(shared_segment_count(5, 5, 3) == 3);
  CHECK(shared_segment_count(0, 1, 3) == 2);
  CHECK(shared_segment_count(0, 63, 3) == 1);
  CHECK(shared_segment_count(0, 0, 1) == 1);
}

TEST_CASE("shared_segment_count equals the common ancestor-path prefix") {
  for (int levels = 1; levels <= 3; ++levels) {
    const std::size_t leaves = oracle::pow8(levels - 1);
    for (std::size_t i = 0; i < leaves; ++i) {
      for (std::size_t j = 0; j < leaves; ++j) {
        const auto pi = oracle::path_to_leaf(i, levels);
        const auto pj = oracle::path_to_leaf(j, levels);
        int common = 0;
        while (common < levels && pi[common] == pj[common]) ++common;
        CHECK(shared_segment_count(i, j, levels) == common);
        CHECK(shared_segment_count(i, j, levels) == shared_segment_count(j, i, levels));
      }
    }
  }
}

TEST_CASE("owned and total parameter counts") {
  const TreeConfig l1 = tree(1);
  CHECK(owned_param_count(l1, 0, 28, 0) == 953);
  std::vector<int> w28{28};
  CHECK(total_param_count(l1, w28) == 953);
  CHECK(minimal_param_count(l1) == 8);

  // uniform width w, L=2: root (3w+w)+(w^2+w); leaves (w^2+w)+(w+1)
  for (int w = 1; w <= 40; ++w) {
    const std::vector<int> widths(9, w);
    const std::size_t closed = (3 * w + w) + (w * w + w) + 8 * ((w * w + w) + (w + 1));
    CHECK(total_param_count(tree(2), widths) == closed);
  }

  std::mt19937 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const int levels = 1 + static_cast<int>(rng() % 3);
    const int hd = 1 + static_cast<int>(rng() % 3);
    const TreeConfig cfg = tree(levels, hd);
    std::vector<int> widths(cfg.node_count());
    for (int& w : widths) w = 1 + static_cast<int>(rng() % 12);
    std::size_t expected = 0;
    for (std::size_t n = 0; n < widths.size(); ++n) {
      const int l = oracle::level_of(n);
      const long parent_w = n == 0 ? 0 : widths[TreeConfig::parent(n)];
      const std::size_t own = oracle::node_params(3, hd, n == 0, l == levels, widths[n], parent_w);
      CHECK(owned_param_count(cfg, n, widths[n], static_cast<int>(parent_w)) == own);
      expected += own;
    }
    CHECK(total_param_count(cfg, widths) == expected);
  }
}

TEST_CASE("allocate_budgets examples") {
  AllocationPolicy even;
  auto b1 = allocate_budgets(1000, tree(1), even);
  REQUIRE(b1.size() == 1);
  CHECK(b1[0].param_budget == 1000);

  auto b2 = allocate_budgets(9000, tree(2), even);
  REQUIRE(b2.size() == 9);
  for (const auto& n : b2) CHECK(n.param_budget == 1000);

  AllocationPolicy deep;
  deep.inter_ratio = 1.2;
  auto b3 = allocate_budgets(10600, tree(2), deep);
  CHECK(b3[0].param_budget == 1000);
  for (std::size_t n = 1; n < 9; ++n) CHECK(b3[n].param_budget == 1200);
}

TEST_CASE("allocate_budgets follows the level-ratio recurrence and never exceeds the total") {
  for (const double r : {0.8, 1.0, 1.2}) {
    for (int levels = 1; levels <= 4; ++levels) {
      AllocationPolicy p;
      p.inter_ratio = r;
      const TreeConfig cfg = tree(levels);
      const std::size_t total = 500000;
      const auto b = allocate_budgets(total, cfg, p);
      const auto values = budget_values(b);
      CHECK(std::accumulate(values.begin(), values.end(), std::size_t{0}) <= total);
      double denom = 0.0;
      for (int l = 1; l <= levels; ++l) denom += std::pow(8.0, l - 1) * std::pow(r, l - 1);
      for (const auto& n : b) {
        const double expected = total / denom * std::pow(r, n.level - 1);
        CHECK(static_cast<double>(n.param_budget) <= expected + 1e-6);
        CHECK(static_cast<double>(n.param_budget) > expected - 1.0);
      }
    }
  }
}

TEST_CASE("allocate_budgets rejects budgets below the width-1 tree") {
  CHECK_THROWS_AS(allocate_budgets(7, tree(1), AllocationPolicy{}), InfeasibleBudgetError);
  try {
    allocate_budgets(10, tree(2), AllocationPolicy{});
    FAIL("expected an infeasible budget");
  } catch (const InfeasibleBudgetError& e) {
    CHECK(e.minimal_budget() >= minimal_param_count(tree(2)));
  }
}

TEST_CASE("importance allocation gives floors plus proportional shares") {
  AllocationPolicy p;
  p.intra = IntraLevel::Importance;
  p.floor_fraction = 0.1;
  std::vector<double> w(8, 0.0);
  w[3] = 1.0;
  w[5] = 0.5;
  const auto b = allocate_budgets(9000, tree(2), p, w);
  CHECK(b[0].param_budget == 1000);
  // even share 1000, floor 100, spread 8000 - 800 = 7200
  CHECK(b[1 + 3].param_budget == 100 + 4800);
  CHECK(b[1 + 5].param_budget == 100 + 2400);
  CHECK(b[1 + 0].param_budget == 100);

  const std::vector<double> zeros(8, 0.0);
  CHECK(budget_values(allocate_budgets(9000, tree(2), p, zeros)) ==
        budget_values(allocate_budgets(9000, tree(2), AllocationPolicy{})));
  CHECK_THROWS_AS(allocate_budgets(9000, tree(2), p, std::vector<double>(3, 1.0)), ConfigError);
}

TEST_CASE("importance allocation preserves each level total") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 300; ++trial) {
    const int levels = 2 + trial % 2;
    const TreeConfig cfg = tree(levels);
    AllocationPolicy even;
    even.inter_ratio = std::array{0.8, 1.0, 1.2}[trial % 3];
    AllocationPolicy imp = even;
    imp.intra = IntraLevel::Importance;
    imp.floor_fraction = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    std::vector<double> w(cfg.leaf_count());
    for (double& x : w) x = rng() % 4 == 0 ? 0.0 : std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    const std::size_t total = minimal_param_count(cfg) * 2 + rng() % 100000;
    CAPTURE(trial);
    const auto a = allocate_budgets(total, cfg, even);
    const auto b = allocate_budgets(total, cfg, imp, w);
    std::vector<std::size_t> sum_a(static_cast<std::size_t>(levels) + 1, 0), sum_b = sum_a;
    for (std::size_t n = 0; n < a.size(); ++n) {
      sum_a[static_cast<std::size_t>(a[n].level)] += a[n].param_budget;
      sum_b[static_cast<std::size_t>(b[n].level)] += b[n].param_budget;
    }
    CHECK(sum_a == sum_b);
  }
}

TEST_CASE("solve_widths examples") {
  std::vector<NodeBudget> b{{0, 1, 1000, 0}};
  CHECK(solve_widths(b, tree(1)) == std::vector<int>{28});
  CHECK(b[0].solved_width == 28);
  b[0].param_budget = 8;
  CHECK(solve_widths(b, tree(1)) == std::vector<int>{1});
  b[0].param_budget = 7;
  CHECK_THROWS_AS(solve_widths(b, tree(1)), InfeasibleBudgetError);
}

TEST_CASE("solve_widths matches the brute-force oracle on random budgets") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 60; ++trial) {
    const int levels = 1 + static_cast<int>(rng() % 2);
    const int hd = 1 + static_cast<int>(rng() % 2);
    const TreeConfig cfg = tree(levels, hd);
    const std::size_t total = 200 + rng() % 20000;
    if (total < minimal_param_count(cfg)) continue;
    std::vector<NodeBudget> budgets;
    try {
      budgets = allocate_budgets(total, cfg, AllocationPolicy{});
    } catch (const InfeasibleBudgetError&) {
      continue;
    }
    const auto expected = oracle::brute_force_widths(budget_values(budgets), levels, hd);
    if (std::find(expected.begin(), expected.end(), 0) != expected.end()) {
      CHECK_THROWS_AS(solve_widths(budgets, cfg), InfeasibleBudgetError);
    } else {
      CHECK(solve_widths(budgets, cfg) == expected);
    }
  }
}

TEST_CASE("absorb_slack stays within budget and keeps widths reproducible") {
  for (const std::size_t total : {108u, 492u, 2028u, 20000u}) {
    const TreeConfig cfg = tree(2);
    auto budgets = allocate_budgets(total, cfg, AllocationPolicy{});
    const auto before = solve_widths(budgets, cfg);
    const auto after = absorb_slack(budgets, cfg, total);
    CHECK(total_param_count(cfg, after) <= total);
    CHECK(total_param_count(cfg, after) >= total_param_count(cfg, before));
    for (std::size_t n = 0; n < after.size(); ++n) CHECK(after[n] >= before[n]);
    CHECK(solve_widths(budgets, cfg) == after);
  }
}

TEST_CASE("plan_tree reaches most of the budget and reports the minimum on failure") {
  const auto plan = plan_tree(2028, tree(2), AllocationPolicy{});
  CHECK(plan.realized_params <= 2028);
  CHECK(plan.realized_params >= 0.95 * 2028);
  CHECK(plan.realized_params == total_param_count(tree(2), plan.widths));

  const std::size_t minimal = minimal_feasible_budget(tree(2), AllocationPolicy{});
  CHECK_NOTHROW(plan_tree(minimal, tree(2), AllocationPolicy{}));
  try {
    plan_tree(minimal - 1, tree(2), AllocationPolicy{});
    FAIL("expected an infeasible budget");
  } catch (const InfeasibleBudgetError& e) {
    CHECK(e.minimal_budget() == minimal);
  }
}

TEST_CASE("importance_weights counts voxels above the threshold") {
  Eigen::ArrayXd v = Eigen::ArrayXd::Zero(32 * 32 * 32);
  Volume base({32, 32, 32}, DType::U16, v);
  const auto regions = partition_octree(base.dims(), 2);
  // region 0 spans z,y,x in [0,16); mark 1024 voxels (4 z-slices of 16x16)
  for (int z = 0; z < 4; ++z)
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x) v[(z * 32 + y) * 32 + x] = 1000;
  // region 7 fully above
  for (int z = 16; z < 32; ++z)
    for (int y = 16; y < 32; ++y)
      for (int x = 16; x < 32; ++x) v[(z * 32 + y) * 32 + x] = 1000;
  const Volume vol({32, 32, 32}, DType::U16, v);
  const auto w = importance_weights(vol, regions, 500.0);
  REQUIRE(w.size() == 8);
  CHECK(w[0] == 0.25);
  CHECK(w[7] == 1.0);
  for (int k = 1; k < 7; ++k) CHECK(w[k] == 0.0);
  for (const double x : importance_weights(base, regions, 500.0)) CHECK(x == 0.0);
}

}  // TEST_SUITE

}  // namespace
}  // namespace treeinr
