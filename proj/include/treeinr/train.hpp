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

#ifndef TREEINR_TRAIN_HPP
#define TREEINR_TRAIN_HPP

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "treeinr/errors.hpp"
#include "treeinr/net.hpp"
#include "treeinr/volume.hpp"

namespace treeinr {

struct TrainConfig {
  std::size_t iterations = 7000;
  double base_lr = 1e-3;
  std::vector<std::size_t> lr_drops{2000, 5000};
  double lr_factor = 0.2;
  /// Coordinates sampled per leaf per iteration; 0 selects max(64, 4096 / K).
  std::size_t batch_per_leaf = 0;
  std::uint64_t seed = 0;
  /// Record the loss every this many iterations (the last one is always recorded).
  std::size_t log_every = 100;
  /// Worker threads for per-leaf passes; 0 or 1 runs inline. Results do not
  /// depend on this value.
  unsigned threads = 0;
  /// Start each leaf's output bias at its region's mean normalized target
  /// before the first step.
  bool warm_start_bias = true;

  void validate() const {
    if (iterations < 1) throw ConfigError("iterations must be >= 1");
    if (!(base_lr > 0.0)) throw ConfigError("learning rate must be positive");
    if (!(lr_factor > 0.0)) throw ConfigError("learning-rate drop factor must be positive");
  }

  /// Learning rate used at 0-based iteration t.
  double lr_at(std::size_t t) const {
    double lr = base_lr;
    for (const std::size_t drop : lr_drops) {
      if (t >= drop) lr *= lr_factor;
    }
    return lr;
  }

  std::size_t resolved_batch_per_leaf(std::size_t leaves) const {
    if (batch_per_leaf > 0) return batch_per_leaf;
    return std::max<std::size_t>(64, 4096 / leaves);
  }
};

enum class LossReduction { Mean, Sum };

/// Coordinates as columns (coord_dim x n), normalized targets, and the leaf each
/// column belongs to.
template <typename Scalar>
struct Batch {
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> coords;
  Eigen::Matrix<Scalar, 1, Eigen::Dynamic> targets;
  std::vector<std::size_t> leaf_ids;
};

template <typename Scalar>
struct GradResult {
  /// Squared error reduced over the batch (mean or sum).
  Scalar loss = 0;
  /// Same layout as TincNet::params().
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> grad;
};

namespace detail {

// Backpropagates one leaf's samples into `grad` and returns their summed
// squared error. `scale` multiplies d(loss)/d(output) = 2 (y - t).
// Every layer product is formed in a temporary before accumulation so that
// the result is independent of what `grad` already holds.
template <typename Scalar, typename Coords, typename Targets>
Scalar accumulate_leaf(const TincNet<Scalar>& net, std::size_t leaf, const Coords& coords,
                       const Targets& targets, Scalar scale,
                       Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& grad) {
  using Net = TincNet<Scalar>;
  using Matrix = typename Net::Matrix;
  typename Net::Trace trace;
  net.forward_leaf(leaf, coords, &trace);
  const auto path = net.leaf_path(leaf);
  const auto residual = (trace.output - targets).eval();
  const Scalar sse = residual.squaredNorm();

  Matrix delta = (Scalar(2) * scale) * residual;  // 1 x n
  const std::size_t sine_layers = path.size() - 1;
  for (std::size_t i = path.size(); i-- > 0;) {
    const LayerSlot& s = path[i];
    if (i < sine_layers) {
      delta = (delta.array() * trace.pre[i].array().cos()).matrix();
      if (i == 0) delta *= net.omega();
    }
    Matrix dw;
    if (i == 0) {
      dw.noalias() = delta * coords.transpose();
    } else {
      dw.noalias() = delta * trace.post[i - 1].transpose();
    }
    const auto db = delta.rowwise().sum().eval();
    Net::weights(grad, s) += dw;
    Net::biases(grad, s) += db;
    if (i > 0) {
      Matrix back;
      back.noalias() = net.weights(s).transpose() * delta;
      delta = std::move(back);
    }
  }
  return sse;
}

}  // namespace detail

/// Exact reverse-mode gradient of the squared-error loss over `batch`.
/// Leaves are processed in ascending order, so shared hyper layers accumulate
/// contributions in a fixed order. Throws DivergedError (tagged `iteration`)
/// if the loss is not finite.
template <typename Scalar>
GradResult<Scalar> grad(const TincNet<Scalar>& net, const Batch<Scalar>& batch,
                        LossReduction reduction = LossReduction::Mean, std::size_t iteration = 0,
                        unsigned threads = 0) {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  const Eigen::Index n = batch.coords.cols();
  if (n == 0) throw ConfigError("gradient batch is empty");
  const Scalar scale = reduction == LossReduction::Mean ? Scalar(1) / Scalar(n) : Scalar(1);

  const auto groups = net.group_by_leaf(batch.leaf_ids);
  std::vector<typename TincNet<Scalar>::Matrix> coords(groups.size());
  std::vector<Eigen::Matrix<Scalar, 1, Eigen::Dynamic>> targets(groups.size());
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const auto& columns = groups[g].second;
    coords[g] = batch.coords(Eigen::all, columns);
    targets[g] = batch.targets(Eigen::all, columns);
  }

  GradResult<Scalar> result;
  result.grad = Vector::Zero(static_cast<Eigen::Index>(net.param_count()));
  std::vector<Scalar> sse(groups.size(), Scalar(0));

  if (threads <= 1 || groups.size() <= 1) {
    for (std::size_t g = 0; g < groups.size(); ++g) {
      sse[g] = detail::accumulate_leaf(net, groups[g].first, coords[g], targets[g], scale,
                                       result.grad);
    }
  } else {
    // One buffer per leaf, reduced in ascending leaf order afterwards.
    std::vector<Vector> partial(groups.size());
    std::vector<std::thread> workers;
    const unsigned count = std::min<unsigned>(threads, static_cast<unsigned>(groups.size()));
    for (unsigned w = 0; w < count; ++w) {
      workers.emplace_back([&, w] {
        for (std::size_t g = w; g < groups.size(); g += count) {
          partial[g] = Vector::Zero(result.grad.size());
          sse[g] = detail::accumulate_leaf(net, groups[g].first, coords[g], targets[g], scale,
                                           partial[g]);
        }
      });
    }
    for (auto& t : workers) t.join();
    for (std::size_t g = 0; g < groups.size(); ++g) result.grad += partial[g];
  }

  Scalar total = 0;
  for (const Scalar s : sse) total += s;
  result.loss = total * scale;
  if (!std::isfinite(static_cast<double>(result.loss))) {
    throw DivergedError("non-finite loss at iteration " + std::to_string(iteration), iteration);
  }
  return result;
}

/// Adamax moments. u tracks the exponentially weighted infinity norm.
template <typename Scalar>
struct AdamaxState {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  AdamaxState() = default;
  explicit AdamaxState(Eigen::Index size) : m(Vector::Zero(size)), u(Vector::Zero(size)) {}

  Vector m;
  Vector u;
  std::size_t t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One Adamax update:
///   m <- b1 m + (1 - b1) g,  u <- max(b2 u, |g|),
///   theta <- theta - lr / (1 - b1^t) * m / (u + eps).
template <typename Scalar>
void adamax_step(AdamaxState<Scalar>& state, Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& params,
                 const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& grads, double lr) {
  if (params.size() != grads.size() || state.m.size() != params.size()) {
    throw std::invalid_argument("adamax: parameter, gradient and state sizes differ");
  }
  ++state.t;
  const Scalar b1 = static_cast<Scalar>(state.beta1);
  const Scalar b2 = static_cast<Scalar>(state.beta2);
  state.m = b1 * state.m + (Scalar(1) - b1) * grads;
  state.u = (b2 * state.u).cwiseMax(grads.cwiseAbs());
  const Scalar step =
      static_cast<Scalar>(lr / (1.0 - std::pow(state.beta1, static_cast<double>(state.t))));
  params.array() -= step * state.m.array() / (state.u.array() + static_cast<Scalar>(state.eps));
}

struct TrainRecord {
  std::size_t iteration = 0;
  double lr = 0.0;
  double loss = 0.0;
};

struct TrainReport {
  std::vector<TrainRecord> records;
  double final_loss = 0.0;
  std::size_t iterations_run = 0;
};

/// Raised by fit() on a non-finite loss; carries the records gathered so far.
class TrainingDivergedError : public DivergedError {
 public:
  TrainingDivergedError(const DivergedError& cause, TrainReport partial)
      : DivergedError(cause.what(), cause.iteration()), report_(std::move(partial)) {}
  const TrainReport& report() const noexcept { return report_; }

 private:
  TrainReport report_;
};

/// Draws batch_per_leaf voxels per leaf, uniformly with replacement, with
/// normalized coordinates and [0, 100] targets. Columns are grouped by leaf in
/// ascending order.
template <typename Scalar>
class VoxelSampler {
 public:
  VoxelSampler(const Volume& volume, std::vector<Region> regions, std::uint64_t seed)
      : volume_(volume), regions_(std::move(regions)), rng_(seed) {
    targets_.resize(volume.size());
    for (Eigen::Index i = 0; i < volume.size(); ++i) {
      targets_[i] = static_cast<Scalar>(
          normalize_intensity(volume.voxels()[i], volume.d_min(), volume.d_max()));
    }
    for (int a = 0; a < 3; ++a) {
      axis_[a].resize(volume.dims()[a]);
      for (int i = 0; i < volume.dims()[a]; ++i) {
        axis_[a][i] = static_cast<Scalar>(normalize_coord(i, volume.dims()[a]));
      }
    }
  }

  const std::vector<Region>& regions() const noexcept { return regions_; }

  /// Mean normalized target over a region.
  Scalar region_mean(const Region& r) const {
    double sum = 0.0;
    for (int z = r.lo[0]; z < r.hi[0]; ++z) {
      for (int y = r.lo[1]; y < r.hi[1]; ++y) {
        const Eigen::Index row = volume_.linear_index(z, y, r.lo[2]);
        for (int x = 0; x < r.hi[2] - r.lo[2]; ++x) sum += static_cast<double>(targets_[row + x]);
      }
    }
    return static_cast<Scalar>(sum / static_cast<double>(r.voxel_count()));
  }

  void sample(std::size_t per_leaf, Batch<Scalar>& batch) {
    const Eigen::Index total = static_cast<Eigen::Index>(per_leaf * regions_.size());
    batch.coords.resize(3, total);
    batch.targets.resize(total);
    batch.leaf_ids.resize(static_cast<std::size_t>(total));
    Eigen::Index col = 0;
    for (const Region& r : regions_) {
      const auto ext = r.extent();
      const std::uint64_t count = static_cast<std::uint64_t>(r.voxel_count());
      for (std::size_t s = 0; s < per_leaf; ++s, ++col) {
        std::uint64_t idx = rng_.below(count);
        const int x = r.lo[2] + static_cast<int>(idx % static_cast<std::uint64_t>(ext[2]));
        idx /= static_cast<std::uint64_t>(ext[2]);
        const int y = r.lo[1] + static_cast<int>(idx % static_cast<std::uint64_t>(ext[1]));
        const int z = r.lo[0] + static_cast<int>(idx / static_cast<std::uint64_t>(ext[1]));
        batch.coords(0, col) = axis_[0][z];
        batch.coords(1, col) = axis_[1][y];
        batch.coords(2, col) = axis_[2][x];
        batch.targets[col] = targets_[volume_.linear_index(z, y, x)];
        batch.leaf_ids[static_cast<std::size_t>(col)] = r.leaf_index;
      }
    }
  }

 private:
  const Volume& volume_;
  std::vector<Region> regions_;
  Rng rng_;
  std::vector<Scalar> targets_;
  std::vector<Scalar> axis_[3];
};

/// Fits `net` to `volume` with balanced per-leaf batches and Adamax. The log
/// stream, if given, receives one JSON object per recorded iteration.
template <typename Scalar>
TrainReport fit(TincNet<Scalar>& net, const Volume& volume, const TrainConfig& cfg,
                std::ostream* log = nullptr) {
  cfg.validate();
  if (net.config().coord_dim != 3) throw ConfigError("volumes need a 3-D coordinate network");
  auto regions = partition_octree(volume.dims(), net.config().levels);
  if (regions.size() != net.leaf_count()) throw ConfigError("network leaves do not match volume partition");

  VoxelSampler<Scalar> sampler(volume, std::move(regions), cfg.seed);
  const std::size_t per_leaf = cfg.resolved_batch_per_leaf(net.leaf_count());
  if (cfg.warm_start_bias) {
    for (const Region& r : sampler.regions()) {
      net.biases(net.output_layer(r.leaf_index))[0] = sampler.region_mean(r);
    }
  }
  AdamaxState<Scalar> state(net.params().size());
  TrainReport report;
  Batch<Scalar> batch;

  for (std::size_t t = 0; t < cfg.iterations; ++t) {
    const double lr = cfg.lr_at(t);
    sampler.sample(per_leaf, batch);
    GradResult<Scalar> g;
    try {
      g = grad(net, batch, LossReduction::Mean, t, cfg.threads);
    } catch (const DivergedError& e) {
      report.iterations_run = t;
      throw TrainingDivergedError(e, std::move(report));
    }
    adamax_step(state, net.params(), g.grad, lr);
    report.final_loss = static_cast<double>(g.loss);
    report.iterations_run = t + 1;
    if ((cfg.log_every > 0 && t % cfg.log_every == 0) || t + 1 == cfg.iterations) {
      report.records.push_back({t, lr, report.final_loss});
      if (log != nullptr) {
        char line[128];
        std::snprintf(line, sizeof line, "{\"iteration\":%zu,\"lr\":%.9g,\"loss\":%.9g}\n", t, lr,
                      report.final_loss);
        *log << line;
      }
    }
  }
  return report;
}

}  // namespace treeinr

#endif  // TREEINR_TRAIN_HPP
