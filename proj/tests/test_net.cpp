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


#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "treeinr/net.hpp"

namespace treeinr {
namespace {

using MatrixF = Eigen::MatrixXf;
using MatrixD = Eigen::MatrixXd;

template <typename Scalar>
std::vector<LayerParams<Scalar>> assemble_path(const TincNet<Scalar>& net, std::size_t leaf) {
  std::vector<LayerParams<Scalar>> layers;
  const auto path = net.leaf_path(leaf);
  for (std::size_t i = 0; i < path.size(); ++i) {
    layers.push_back(net.layer_params(path[i], i == 0 ? net.omega() : Scalar(1)));
  }
  return layers;
}

std::vector<int> random_widths(const TreeConfig& cfg, std::mt19937& rng, int max_width) {
  std::vector<int> w(cfg.node_count());
  for (int& x : w) x = 1 + static_cast<int>(rng() % static_cast<unsigned>(max_width));
  return w;
}

TEST_SUITE("net") {

TEST_CASE("parameter layout is contiguous and canonical") {
  const TreeConfig cfg{3, 2, 2};
  std::vector<int> widths{5, 3, 4, 2, 6, 1, 3, 2, 4};
  const TincNet<float> net(cfg, widths);
  CHECK(net.param_count() == total_param_count(cfg, widths));
  Eigen::Index offset = 0;
  for (const LayerSlot& s : net.slots()) {
    CHECK(s.offset == offset);
    offset += s.size();
  }
  CHECK(offset == static_cast<Eigen::Index>(net.param_count()));
  CHECK(net.slots().front().offset == net.input_layer().offset);
  CHECK(net.slots().back().offset == net.output_layer(7).offset);
  CHECK(net.hyper_layers(3).front().in_width == 5);
  CHECK(net.hyper_layers(3).front().out_width == 2);
  CHECK(net.hyper_layers(3).back().in_width == 2);
  CHECK(net.output_layer(2).in_width == 2);
}

TEST_CASE("param_count examples") {
  CHECK(TincNet<float>(TreeConfig{}, {28}).param_count() == 953);
  CHECK_THROWS_AS(TincNet<float>(TreeConfig{3, 2, 1}, {4, 4}), std::invalid_argument);
  CHECK_THROWS_AS(TincNet<float>(TreeConfig{}, {0}), std::invalid_argument);
}

TEST_CASE("init_siren is deterministic and within the sampling bounds") {
  const TreeConfig cfg{3, 2, 1};
  std::vector<int> widths{16, 16, 16, 16, 16, 16, 16, 16, 16};
  const auto a = init_siren<float>(cfg, widths, 42);
  const auto b = init_siren<float>(cfg, widths, 42);
  const auto c = init_siren<float>(cfg, widths, 43);
  CHECK((a.params().array() == b.params().array()).all());
  CHECK(!(a.params().array() == c.params().array()).all());

  const auto in = a.weights(a.input_layer());
  CHECK(in.cols() == 3);
  CHECK(in.cwiseAbs().maxCoeff() <= 1.0f / 3.0f);
  CHECK(in.cwiseAbs().maxCoeff() > 0.25f);
  const float hidden_bound = static_cast<float>(std::sqrt(6.0 / 16.0));
  CHECK(hidden_bound == doctest::Approx(0.6124).epsilon(1e-4));
  for (const LayerSlot& s : a.slots()) {
    CHECK(a.biases(s).isZero(0.0f));
    if (s.offset == a.input_layer().offset) continue;
    CHECK(s.in_width == 16);
    CHECK(a.weights(s).cwiseAbs().maxCoeff() <= hidden_bound);
  }
}

TEST_CASE("Rng reproduces the documented mt19937_64 draws") {
  Rng rng(9);
  std::mt19937_64 ref(9);
  for (int i = 0; i < 100; ++i) {
    const double expect = static_cast<double>(ref() >> 11) / 9007199254740992.0;
    CHECK(rng.uniform01() == expect);
  }
}

TEST_CASE("zero weights output the output-layer bias") {
  TincNet<double> net(TreeConfig{3, 2, 1}, std::vector<int>(9, 4));
  for (std::size_t k = 0; k < 8; ++k) net.biases(net.output_layer(k))[0] = 10.0 + static_cast<double>(k);
  const MatrixD coords = MatrixD::Random(3, 5);
  for (std::size_t k = 0; k < 8; ++k) {
    const auto y = net.forward_leaf(k, coords);
    for (Eigen::Index i = 0; i < 5; ++i) CHECK(y[i] == 10.0 + static_cast<double>(k));
  }
}

TEST_CASE("an L=1 net equals a plain sine MLP") {
  std::mt19937 rng(3);
  for (int hd = 1; hd <= 3; ++hd) {
    const TreeConfig cfg{3, 1, hd};
    const auto net = init_siren<double>(cfg, {7}, 100 + hd);
    const MatrixD coords = MatrixD::Random(3, 9);
    const auto y = net.forward_leaf(0, coords);
    const auto layers = assemble_path(net, 0);
    CHECK(layers.size() == static_cast<std::size_t>(2 + hd));
    const auto flat = oracle::flat_mlp(layers, coords);
    CHECK((y.array() == flat.array()).all());
    for (Eigen::Index i = 0; i < coords.cols(); ++i) {
      const Eigen::Vector3d c = coords.col(i);
      CHECK(y[i] == doctest::Approx(oracle::scalar_mlp(layers, c.data())).epsilon(1e-12));
    }
  }
}

TEST_CASE("every leaf of an L=3 tree equals its assembled ancestor-path MLP") {
  std::mt19937 rng(8);
  const TreeConfig cfg{3, 3, 2};
  const auto net = init_siren<float>(cfg, random_widths(cfg, rng, 6), 17);
  const MatrixF coords = MatrixF::Random(3, 11);
  for (std::size_t leaf = 0; leaf < net.leaf_count(); ++leaf) {
    const auto tree_y = net.forward_leaf(leaf, coords);
    const auto flat_y = oracle::flat_mlp(assemble_path(net, leaf), coords);
    CHECK((tree_y.array() == flat_y.array()).all());
  }
}

TEST_CASE("sibling leaves share root activations") {
  const TreeConfig cfg{3, 2, 1};
  const auto net = init_siren<double>(cfg, std::vector<int>(9, 5), 4);
  const MatrixD coords = MatrixD::Random(3, 4);
  TincNet<double>::Trace t0, t1;
  const auto y0 = net.forward_leaf(0, coords, &t0);
  const auto y1 = net.forward_leaf(1, coords, &t1);
  // input layer and root hyper layer
  for (int i = 0; i < 2; ++i) {
    CHECK((t0.pre[i].array() == t1.pre[i].array()).all());
    CHECK((t0.post[i].array() == t1.post[i].array()).all());
  }
  CHECK(!(t0.post[2].array() == t1.post[2].array()).all());
  CHECK(!(y0.array() == y1.array()).all());
}

TEST_CASE("mixed batches route each column to its leaf") {
  const TreeConfig cfg{3, 2, 1};
  const auto net = init_siren<float>(cfg, std::vector<int>(9, 4), 5);
  const MatrixF coords = MatrixF::Random(3, 20);
  std::vector<std::size_t> leaves(20);
  for (std::size_t i = 0; i < leaves.size(); ++i) leaves[i] = (i * 5) % 8;
  const auto y = net.forward(coords, leaves);
  for (Eigen::Index i = 0; i < 20; ++i) {
    const MatrixF one = coords.col(i);
    CHECK(y[i] == doctest::Approx(net.forward_leaf(leaves[static_cast<std::size_t>(i)], one)[0]).epsilon(1e-5));
  }
  leaves[3] = 8;
  CHECK_THROWS_AS(net.forward(coords, leaves), std::out_of_range);
}

TEST_CASE("cast preserves layout") {
  const auto net = init_siren<float>(TreeConfig{3, 2, 1}, std::vector<int>(9, 3), 6);
  const auto d = net.cast<double>();
  CHECK(d.param_count() == net.param_count());
  CHECK((d.params().cast<float>().array() == net.params().array()).all());
}

}  // TEST_SUITE

}  // namespace
}  // namespace treeinr
