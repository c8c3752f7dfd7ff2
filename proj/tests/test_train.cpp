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
#include <cmath>
#include <limits>
#include <random>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "treeinr/errors.hpp"
#include "treeinr/train.hpp"

namespace treeinr {
namespace {

Batch<double> random_batch(int n, std::size_t leaves, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> coord(-1.0, 1.0), target(0.0, 100.0);
  Batch<double> b;
  b.coords.resize(3, n);
  b.targets.resize(n);
  b.leaf_ids.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    for (int a = 0; a < 3; ++a) b.coords(a, i) = coord(rng);
    b.targets[i] = target(rng);
    b.leaf_ids[static_cast<std::size_t>(i)] = static_cast<std::size_t>(rng() % leaves);
  }
  return b;
}

Batch<double> sub_batch(const Batch<double>& b, std::size_t leaf) {
  std::vector<Eigen::Index> cols;
  for (std::size_t i = 0; i < b.leaf_ids.size(); ++i)
    if (b.leaf_ids[i] == leaf) cols.push_back(static_cast<Eigen::Index>(i));
  Batch<double> out;
  out.coords = b.coords(Eigen::all, cols);
  out.targets = b.targets(Eigen::all, cols);
  out.leaf_ids.assign(cols.size(), leaf);
  return out;
}

TEST_SUITE("train") {

TEST_CASE("analytic gradients match central differences on every layer type") {
  const TreeConfig cfg{3, 2, 2};
  std::vector<int> widths(9);
  for (int i = 0; i < 9; ++i) widths[i] = 3 + i % 5;
  auto net = init_siren<double>(cfg, widths, 21);
  std::mt19937_64 rng(2);
  for (auto& p : net.params()) p += std::uniform_real_distribution<double>(-0.05, 0.05)(rng);
  const Batch<double> batch = random_batch(48, 8, 5);
  const auto g = grad(net, batch);

  auto loss = [&] { return grad(net, batch).loss; };
  const double h = 1e-4;
  int checked = 0;
  bool saw_input = false, saw_hidden = false, saw_output = false;
  const LayerSlot input = net.input_layer();
  for (const LayerSlot& s : net.slots()) {
    const bool is_input = s.offset == input.offset;
    bool is_output = false;
    for (std::size_t k = 0; k < net.leaf_count(); ++k) is_output |= s.offset == net.output_layer(k).offset;
    for (Eigen::Index k = s.offset; k < s.offset + s.size(); ++k) {
      const double fd = oracle::central_difference(loss, net.params()[k], h);
      const double an = g.grad[k];
      const double scale = std::max({std::abs(fd), std::abs(an), 1e-3});
      CHECK(std::abs(fd - an) / scale <= 1e-4);
      ++checked;
      saw_input |= is_input;
      saw_output |= is_output;
      saw_hidden |= !is_input && !is_output;
    }
  }
  CHECK(checked >= 50);
  CHECK(saw_input);
  CHECK(saw_hidden);
  CHECK(saw_output);
}

TEST_CASE("exact predictions give zero gradients") {
  const auto net = init_siren<double>(TreeConfig{3, 2, 1}, std::vector<int>(9, 4), 3);
  Batch<double> b = random_batch(30, 8, 9);
  b.targets = net.forward(b.coords, b.leaf_ids);
  const auto g = grad(net, b);
  CHECK(g.loss == 0.0);
  CHECK(g.grad.isZero(0.0));
}

TEST_CASE("single-leaf batches leave other output layers untouched") {
  const auto net = init_siren<double>(TreeConfig{3, 2, 1}, std::vector<int>(9, 4), 3);
  Batch<double> b = random_batch(16, 1, 10);
  for (auto& id : b.leaf_ids) id = 6;
  const auto g = grad(net, b);
  for (std::size_t k = 0; k < 8; ++k) {
    const auto out = net.output_layer(k);
    const bool zero = g.grad.segment(out.offset, out.size()).isZero(0.0);
    CHECK(zero == (k != 6));
    for (const LayerSlot& s : net.hyper_layers(net.config().leaf_node(k))) {
      CHECK(g.grad.segment(s.offset, s.size()).isZero(0.0) == (k != 6));
    }
  }
}

TEST_CASE("shared-segment gradients add exactly across leaves") {
  const auto net = init_siren<double>(TreeConfig{3, 2, 1}, std::vector<int>(9, 5), 12);
  Batch<double> b = random_batch(24, 8, 13);
  for (std::size_t i = 0; i < b.leaf_ids.size(); ++i) b.leaf_ids[i] = i % 2 == 0 ? 2 : 5;
  const auto both = grad(net, b, LossReduction::Sum);
  const auto a = grad(net, sub_batch(b, 2), LossReduction::Sum);
  const auto c = grad(net, sub_batch(b, 5), LossReduction::Sum);
  const Eigen::VectorXd sum = a.grad + c.grad;
  CHECK((both.grad.array() == sum.array()).all());
}

TEST_CASE("threaded gradients are bit-identical to inline gradients") {
  const auto net = init_siren<double>(TreeConfig{3, 3, 1}, std::vector<int>(73, 3), 14);
  const Batch<double> b = random_batch(200, 64, 15);
  const auto inline_g = grad(net, b, LossReduction::Mean, 0, 0);
  const auto threaded = grad(net, b, LossReduction::Mean, 0, 4);
  CHECK(inline_g.loss == threaded.loss);
  CHECK((inline_g.grad.array() == threaded.grad.array()).all());
}

TEST_CASE("non-finite loss raises a divergence error") {
  auto net = init_siren<double>(TreeConfig{}, {4}, 1);
  net.params()[0] = std::numeric_limits<double>::quiet_NaN();
  try {
    grad(net, random_batch(4, 1, 1), LossReduction::Mean, 17);
    FAIL("expected divergence");
  } catch (const DivergedError& e) {
    CHECK(e.iteration() == 17);
  }
  Batch<double> empty;
  empty.coords.resize(3, 0);
  CHECK_THROWS_AS(grad(net, empty), ConfigError);
}

TEST_CASE("adamax scalar step") {
  AdamaxState<double> state(1);
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(1);
  const Eigen::VectorXd g = Eigen::VectorXd::Ones(1);
  adamax_step(state, theta, g, 0.001);
  CHECK(state.t == 1);
  CHECK(state.m[0] == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(state.u[0] == 1.0);
  // step lr / (1 - beta1) = 0.01 times m / (u + eps) = 0.1
  CHECK(theta[0] == doctest::Approx(-0.001 / (1.0 + 1e-8)).epsilon(1e-12));
}

TEST_CASE("adamax with zero gradients leaves parameters unchanged") {
  AdamaxState<float> state(5);
  Eigen::VectorXf theta = Eigen::VectorXf::LinSpaced(5, -1.0f, 1.0f);
  const Eigen::VectorXf before = theta;
  adamax_step(state, theta, Eigen::VectorXf::Zero(5).eval(), 0.001);
  CHECK((theta.array() == before.array()).all());
}

TEST_CASE("adamax matches a scalar recurrence over many steps") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n01;
  AdamaxState<double> state(3);
  Eigen::VectorXd theta(3);
  theta << 0.5, -0.2, 1.0;
  double ref_theta[3] = {0.5, -0.2, 1.0}, m[3] = {0, 0, 0}, u[3] = {0, 0, 0};
  for (int t = 1; t <= 50; ++t) {
    Eigen::VectorXd g(3);
    for (int i = 0; i < 3; ++i) g[i] = n01(rng);
    adamax_step(state, theta, g, 0.01);
    for (int i = 0; i < 3; ++i) {
      m[i] = 0.9 * m[i] + 0.1 * g[i];
      u[i] = std::max(0.999 * u[i], std::abs(g[i]));
      ref_theta[i] -= 0.01 / (1.0 - std::pow(0.9, t)) * m[i] / (u[i] + 1e-8);
    }
  }
  for (int i = 0; i < 3; ++i) CHECK(theta[i] == doctest::Approx(ref_theta[i]).epsilon(1e-12));
}

TEST_CASE("learning-rate schedule boundaries") {
  const TrainConfig cfg;
  CHECK(cfg.lr_at(0) == 1e-3);
  CHECK(cfg.lr_at(1999) == 1e-3);
  CHECK(cfg.lr_at(2000) == doctest::Approx(2e-4).epsilon(1e-12));
  CHECK(cfg.lr_at(4999) == doctest::Approx(2e-4).epsilon(1e-12));
  CHECK(cfg.lr_at(5000) == doctest::Approx(4e-5).epsilon(1e-12));
  CHECK(cfg.lr_at(6999) == doctest::Approx(4e-5).epsilon(1e-12));
  CHECK(cfg.resolved_batch_per_leaf(1) == 4096);
  CHECK(cfg.resolved_batch_per_leaf(512) == 64);
}

TEST_CASE("sampler draws coordinates inside each leaf with matching targets") {
  const Volume vol = oracle::random_volume({8, 8, 8}, DType::U8, 2);
  VoxelSampler<double> sampler(vol, partition_octree(vol.dims(), 2), 6);
  Batch<double> b;
  sampler.sample(10, b);
  REQUIRE(b.coords.cols() == 80);
  for (Eigen::Index i = 0; i < 80; ++i) {
    const auto leaf = b.leaf_ids[static_cast<std::size_t>(i)];
    CHECK(leaf == static_cast<std::size_t>(i / 10));
    const int z = static_cast<int>(std::lround((b.coords(0, i) + 1.0) * 3.5));
    const int y = static_cast<int>(std::lround((b.coords(1, i) + 1.0) * 3.5));
    const int x = static_cast<int>(std::lround((b.coords(2, i) + 1.0) * 3.5));
    CHECK(sampler.regions()[leaf].contains(z, y, x));
    CHECK(b.targets[i] == doctest::Approx(normalize_intensity(vol.at(z, y, x), vol.d_min(), vol.d_max())));
  }
}

TEST_CASE("fit rejects zero iterations") {
  auto net = init_siren<float>(TreeConfig{}, {4}, 1);
  const Volume vol = oracle::random_volume({4, 4, 4}, DType::U8, 1);
  TrainConfig cfg;
  cfg.iterations = 0;
  CHECK_THROWS_AS(fit(net, vol, cfg), ConfigError);
}

TEST_CASE("fit is deterministic for a fixed seed") {
  const Volume vol = oracle::smooth_volume(16);
  TrainConfig cfg;
  cfg.iterations = 60;
  cfg.log_every = 1;
  cfg.seed = 3;
  auto a = init_siren<float>(TreeConfig{3, 2, 1}, std::vector<int>(9, 6), 9);
  auto b = a;
  std::ostringstream log_a, log_b;
  const auto ra = fit(a, vol, cfg, &log_a);
  const auto rb = fit(b, vol, cfg, &log_b);
  REQUIRE(ra.records.size() == 60);
  for (std::size_t i = 0; i < ra.records.size(); ++i) CHECK(ra.records[i].loss == rb.records[i].loss);
  CHECK(log_a.str() == log_b.str());
  CHECK((a.params().array() == b.params().array()).all());
  CHECK(ra.records.back().loss < ra.records.front().loss);
}

TEST_CASE("fit reports the iteration that diverged") {
  auto net = init_siren<float>(TreeConfig{}, {4}, 1);
  net.params()[2] = std::numeric_limits<float>::infinity();
  const Volume vol = oracle::random_volume({4, 4, 4}, DType::U8, 1);
  TrainConfig cfg;
  cfg.iterations = 10;
  try {
    fit(net, vol, cfg);
    FAIL("expected divergence");
  } catch (const TrainingDivergedError& e) {
    CHECK(e.iteration() == 0);
    CHECK(e.report().iterations_run == 0);
  }
}

TEST_CASE("doubling the parameter budget does not raise the final loss") {
  const Volume vol = oracle::smooth_volume(16);
  TincNet<float>::Matrix coords(3, vol.size());
  Eigen::RowVectorXf targets(vol.size());
  Eigen::Index i = 0;
  for (int z = 0; z < 16; ++z)
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x, ++i) {
        coords.col(i) << static_cast<float>(normalize_coord(z, 16)), static_cast<float>(normalize_coord(y, 16)),
            static_cast<float>(normalize_coord(x, 16));
        targets[i] = static_cast<float>(normalize_intensity(vol.voxels()[i], vol.d_min(), vol.d_max()));
      }
  auto final_mse = [&](std::size_t budget) {
    const TreePlan plan = plan_tree(budget, TreeConfig{}, AllocationPolicy{});
    auto net = init_siren<float>(TreeConfig{}, plan.widths, 4);
    TrainConfig cfg;
    cfg.iterations = 1500;
    cfg.seed = 8;
    fit(net, vol, cfg);
    return (net.forward_leaf(0, coords) - targets).cast<double>().squaredNorm() / static_cast<double>(vol.size());
  };
  for (const std::size_t budget : {120, 400}) {
    CAPTURE(budget);
    const double loss_b = final_mse(budget);
    const double loss_2b = final_mse(2 * budget);
    CAPTURE(loss_b);
    CAPTURE(loss_2b);
    CHECK(loss_2b <= 1.05 * loss_b);
  }
}

}  // TEST_SUITE

TEST_SUITE("train-convergence") {

TEST_CASE("constant volume reaches MSE 1e-4 within 500 iterations for w >= 4") {
  const Volume vol = oracle::constant_volume({32, 32, 32}, DType::U16, 1234.0);
  for (const int w : {4, 8, 16}) {
    CAPTURE(w);
    auto net = init_siren<float>(TreeConfig{}, {w}, 3);
    TrainConfig cfg;
    cfg.iterations = 500;
    cfg.seed = 2;
    fit(net, vol, cfg);
    TincNet<float>::Matrix coords(3, 512);
    std::mt19937 rng(1);
    for (Eigen::Index i = 0; i < coords.size(); ++i)
      coords.data()[i] = std::uniform_real_distribution<float>(-1.0f, 1.0f)(rng);
    const double mse = net.forward_leaf(0, coords).cast<double>().squaredNorm() / 512.0;
    CHECK(mse <= 1e-4);
  }
}

}  // TEST_SUITE

}  // namespace
}  // namespace treeinr
