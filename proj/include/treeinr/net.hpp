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

#ifndef TREEINR_NET_HPP
#define TREEINR_NET_HPP

#include <Eigen/Core>

#include <cassert>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "treeinr/octree.hpp"

namespace treeinr {

/// Frequency scale of the first (input) sine layer.
inline constexpr double kSirenOmega = 30.0;

/// Location of one dense layer inside a flat parameter vector. Weights are
/// stored row-major (out_width x in_width) followed by out_width biases.
struct LayerSlot {
  Eigen::Index in_width = 0;
  Eigen::Index out_width = 0;
  Eigen::Index offset = 0;

  Eigen::Index weight_count() const noexcept { return in_width * out_width; }
  Eigen::Index size() const noexcept { return weight_count() + out_width; }
};

/// A standalone copy of one layer.
template <typename Scalar>
struct LayerParams {
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> weights;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> biases;
  Scalar omega = Scalar(1);
};

/// Deterministic uniform source for initialization and sampling: mt19937_64,
/// reals built from the top 53 bits, integers by modulo reduction.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }
  std::uint64_t below(std::uint64_t n) { return engine_() % n; }

 private:
  std::mt19937_64 engine_;
};

/// Tree-structured sine MLP. All learnable scalars live in one flat vector in
/// canonical order: breadth-first nodes; within a node the root input layer,
/// then the hyper layers in depth order, then the leaf output layer.
///
/// Leaf k evaluates out_k . hyper(level L ancestor) . ... . hyper(root) . in,
/// where every hyper layer is physically owned by one node and therefore shared
/// by all leaves beneath it.
template <typename Scalar>
class TincNet {
 public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using RowMajorMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  TincNet() = default;

  /// Zero-initialized network; `widths` indexed by breadth-first node id.
  TincNet(const TreeConfig& cfg, std::vector<int> widths, Scalar omega = Scalar(kSirenOmega))
      : cfg_(cfg), widths_(std::move(widths)), omega_(omega) {
    cfg_.validate();
    if (widths_.size() != cfg_.node_count()) {
      throw std::invalid_argument("expected " + std::to_string(cfg_.node_count()) +
                                  " widths, got " + std::to_string(widths_.size()));
    }
    for (const int w : widths_) {
      if (w < 1) throw std::invalid_argument("layer widths must be >= 1");
    }
    Eigen::Index offset = 0;
    auto place = [&offset](Eigen::Index in, Eigen::Index out) {
      LayerSlot slot{in, out, offset};
      offset += slot.size();
      return slot;
    };
    hyper_.resize(widths_.size());
    output_.resize(cfg_.leaf_count());
    for (std::size_t n = 0; n < widths_.size(); ++n) {
      const Eigen::Index w = widths_[n];
      if (n == 0) input_ = place(cfg_.coord_dim, w);
      const Eigen::Index in = n == 0 ? w : widths_[TreeConfig::parent(n)];
      hyper_[n].push_back(place(in, w));
      for (int d = 1; d < cfg_.hyper_depth; ++d) hyper_[n].push_back(place(w, w));
      if (cfg_.is_leaf(n)) output_[n - TreeConfig::level_offset(cfg_.levels)] = place(w, 1);
    }
    params_ = Vector::Zero(offset);
  }

  const TreeConfig& config() const noexcept { return cfg_; }
  const std::vector<int>& widths() const noexcept { return widths_; }
  Scalar omega() const noexcept { return omega_; }
  std::size_t leaf_count() const noexcept { return output_.size(); }
  std::size_t node_count() const noexcept { return widths_.size(); }

  Vector& params() noexcept { return params_; }
  const Vector& params() const noexcept { return params_; }
  /// Number of distinct learnable scalars.
  std::size_t param_count() const noexcept { return static_cast<std::size_t>(params_.size()); }

  const LayerSlot& input_layer() const noexcept { return input_; }
  const std::vector<LayerSlot>& hyper_layers(std::size_t node) const { return hyper_[node]; }
  const LayerSlot& output_layer(std::size_t leaf) const { return output_[leaf]; }

  /// Every layer slot in canonical storage order.
  std::vector<LayerSlot> slots() const {
    std::vector<LayerSlot> out;
    for (std::size_t n = 0; n < widths_.size(); ++n) {
      if (n == 0) out.push_back(input_);
      out.insert(out.end(), hyper_[n].begin(), hyper_[n].end());
      if (cfg_.is_leaf(n)) out.push_back(output_[n - TreeConfig::level_offset(cfg_.levels)]);
    }
    return out;
  }

  // Views into this net's parameters or into any flat vector of the same
  // layout (gradients, optimizer moments).
  template <typename Flat>
  static auto weights(Flat& flat, const LayerSlot& s) {
    using Map = std::conditional_t<std::is_const_v<Flat>, Eigen::Map<const RowMajorMatrix>,
                                   Eigen::Map<RowMajorMatrix>>;
    return Map(flat.data() + s.offset, s.out_width, s.in_width);
  }
  template <typename Flat>
  static auto biases(Flat& flat, const LayerSlot& s) {
    using Map = std::conditional_t<std::is_const_v<Flat>, Eigen::Map<const Vector>,
                                   Eigen::Map<Vector>>;
    return Map(flat.data() + s.offset + s.weight_count(), s.out_width);
  }
  auto weights(const LayerSlot& s) { return weights(params_, s); }
  auto weights(const LayerSlot& s) const { return weights(params_, s); }
  auto biases(const LayerSlot& s) { return biases(params_, s); }
  auto biases(const LayerSlot& s) const { return biases(params_, s); }

  LayerParams<Scalar> layer_params(const LayerSlot& s, Scalar omega = Scalar(1)) const {
    return {weights(s), biases(s), omega};
  }

  /// Layers leaf `leaf` evaluates, in application order (input first).
  std::vector<LayerSlot> leaf_path(std::size_t leaf) const {
    std::vector<LayerSlot> path{input_};
    for (const std::size_t node : cfg_.ancestor_path(leaf)) {
      path.insert(path.end(), hyper_[node].begin(), hyper_[node].end());
    }
    path.push_back(output_[leaf]);
    return path;
  }

  /// Intermediate values of one leaf's forward pass. pre[i] and post[i] are the
  /// pre-activation and activation of sine layer i along leaf_path(); the
  /// output layer is linear.
  struct Trace {
    std::vector<Matrix> pre;
    std::vector<Matrix> post;
    RowVector output;
  };

  /// Evaluates leaf `leaf` on coordinates given as columns (coord_dim x n).
  template <typename Derived>
  RowVector forward_leaf(std::size_t leaf, const Eigen::MatrixBase<Derived>& coords,
                         Trace* trace = nullptr) const {
    check_leaf(leaf);
    const auto path = leaf_path(leaf);
    Matrix h;
    for (std::size_t i = 0; i + 1 < path.size(); ++i) {
      const LayerSlot& s = path[i];
      Matrix z;
      if (i == 0) {
        z = (omega_ * ((weights(s) * coords).colwise() + biases(s)).array()).matrix();
      } else {
        z = (weights(s) * h).colwise() + biases(s);
      }
      h = z.array().sin().matrix();
      if (trace != nullptr) {
        trace->pre.push_back(std::move(z));
        trace->post.push_back(h);
      }
    }
    const LayerSlot& out = path.back();
    RowVector y = ((weights(out) * h).colwise() + biases(out)).row(0);
    if (trace != nullptr) trace->output = y;
    return y;
  }

  /// Evaluates a mixed batch; column i is routed to leaf leaf_ids[i].
  template <typename Derived>
  RowVector forward(const Eigen::MatrixBase<Derived>& coords,
                    std::span<const std::size_t> leaf_ids) const {
    assert(static_cast<std::size_t>(coords.cols()) == leaf_ids.size());
    RowVector result(coords.cols());
    for (const auto& [leaf, columns] : group_by_leaf(leaf_ids)) {
      Matrix batch(coords.rows(), static_cast<Eigen::Index>(columns.size()));
      for (std::size_t c = 0; c < columns.size(); ++c) batch.col(c) = coords.col(columns[c]);
      const RowVector y = forward_leaf(leaf, batch);
      for (std::size_t c = 0; c < columns.size(); ++c) result[columns[c]] = y[c];
    }
    return result;
  }

  /// Ascending leaf ids with the batch columns routed to each, in batch order.
  std::vector<std::pair<std::size_t, std::vector<Eigen::Index>>> group_by_leaf(
      std::span<const std::size_t> leaf_ids) const {
    std::vector<std::vector<Eigen::Index>> columns(leaf_count());
    for (std::size_t i = 0; i < leaf_ids.size(); ++i) {
      check_leaf(leaf_ids[i]);
      columns[leaf_ids[i]].push_back(static_cast<Eigen::Index>(i));
    }
    std::vector<std::pair<std::size_t, std::vector<Eigen::Index>>> groups;
    for (std::size_t k = 0; k < columns.size(); ++k) {
      if (!columns[k].empty()) groups.emplace_back(k, std::move(columns[k]));
    }
    return groups;
  }

  template <typename To>
  TincNet<To> cast() const {
    TincNet<To> out(cfg_, widths_, static_cast<To>(omega_));
    out.params() = params_.template cast<To>();
    return out;
  }

 private:
  void check_leaf(std::size_t leaf) const {
    if (leaf >= output_.size()) {
      throw std::out_of_range("leaf ordinal " + std::to_string(leaf) + " out of range (" +
                              std::to_string(output_.size()) + " leaves)");
    }
  }

  TreeConfig cfg_;
  std::vector<int> widths_;
  Scalar omega_ = Scalar(kSirenOmega);
  LayerSlot input_;
  std::vector<std::vector<LayerSlot>> hyper_;
  std::vector<LayerSlot> output_;
  Vector params_;
};

/// SIREN initialization. Input layer weights ~ U(-1/fan_in, 1/fan_in), every
/// other layer ~ U(-sqrt(6/fan_in), sqrt(6/fan_in)), biases zero. Draws follow
/// canonical storage order, weights row-major.
template <typename Scalar>
TincNet<Scalar> init_siren(const TreeConfig& cfg, const std::vector<int>& widths,
                           std::uint64_t seed) {
  TincNet<Scalar> net(cfg, widths);
  Rng rng(seed);
  const LayerSlot input = net.input_layer();
  for (const LayerSlot& s : net.slots()) {
    const double fan_in = static_cast<double>(s.in_width);
    const double bound =
        s.offset == input.offset ? 1.0 / fan_in : std::sqrt(6.0 / fan_in);
    auto w = net.weights(s);
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = static_cast<Scalar>(rng.uniform(-bound, bound));
    }
  }
  return net;
}

}  // namespace treeinr

#endif  // TREEINR_NET_HPP
