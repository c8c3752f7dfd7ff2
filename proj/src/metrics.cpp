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

#include "treeinr/metrics.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <limits>
#include <string>
#include <vector>

#include "treeinr/errors.hpp"

namespace treeinr {

namespace {

constexpr int kWindow = 7;

void require_same_shape(const Volume& a, const Volume& b) {
  if (a.dims() != b.dims()) throw ConfigError("volumes have different dims");
  if (a.dtype() != b.dtype()) throw ConfigError("volumes have different dtypes");
}

// Valid-mode separable Gaussian filter; output dims shrink by 6 per axis.
Eigen::ArrayXd filter_valid(const Eigen::ArrayXd& in, const Dims& dims) {
  const auto g = ssim_gaussian_taps();
  Dims cur = dims;
  Eigen::ArrayXd src = in;
  // axis 2 (x, stride 1), then 1 (y), then 0 (z)
  for (int axis = 2; axis >= 0; --axis) {
    Dims next = cur;
    next[axis] -= kWindow - 1;
    const Eigen::Index stride = axis == 2 ? 1 : (axis == 1 ? cur[2] : static_cast<Eigen::Index>(cur[1]) * cur[2]);
    Eigen::ArrayXd dst(static_cast<Eigen::Index>(next[0]) * next[1] * next[2]);
    Eigen::Index o = 0;
    for (int z = 0; z < next[0]; ++z) {
      for (int y = 0; y < next[1]; ++y) {
        for (int x = 0; x < next[2]; ++x, ++o) {
          const Eigen::Index base = (static_cast<Eigen::Index>(z) * cur[1] + y) * cur[2] + x;
          double acc = 0.0;
          for (int t = 0; t < kWindow; ++t) acc += g[t] * src[base + t * stride];
          dst[o] = acc;
        }
      }
    }
    src = std::move(dst);
    cur = next;
  }
  return src;
}

struct LocalMoments {
  Eigen::ArrayXd mean;
  Eigen::ArrayXd mean_sq;
};

LocalMoments local_moments(const Volume& v) {
  return {filter_valid(v.voxels(), v.dims()), filter_valid(v.voxels().square(), v.dims())};
}

double mean_ssim(const LocalMoments& a, const LocalMoments& b, const Eigen::ArrayXd& mean_ab,
                 double peak) {
  const double c1 = (0.01 * peak) * (0.01 * peak);
  const double c2 = (0.03 * peak) * (0.03 * peak);
  const Eigen::ArrayXd mu_ab = a.mean * b.mean;
  const Eigen::ArrayXd var_a = a.mean_sq - a.mean.square();
  const Eigen::ArrayXd var_b = b.mean_sq - b.mean.square();
  const Eigen::ArrayXd cov = mean_ab - mu_ab;
  const Eigen::ArrayXd num = (2.0 * mu_ab + c1) * (2.0 * cov + c2);
  const Eigen::ArrayXd den = (a.mean.square() + b.mean.square() + c1) * (var_a + var_b + c2);
  return (num / den).mean();
}

void require_ssim_extent(const Dims& dims) {
  for (int a = 0; a < 3; ++a) {
    if (dims[a] < kWindow) {
      throw ConfigError("ssim3d needs every axis >= 7, got " + std::to_string(dims[a]));
    }
  }
}

}  // namespace

double metric_peak(const Volume& a, const Volume& b) {
  if (a.dtype() != DType::F32) return std::ldexp(1.0, bit_depth(a.dtype())) - 1.0;
  return std::max(a.d_max(), b.d_max()) - std::min(a.d_min(), b.d_min());
}

double psnr(const Volume& a, const Volume& b) {
  require_same_shape(a, b);
  const double mse = (a.voxels() - b.voxels()).square().mean();
  if (mse == 0.0) return kInfinitePsnr;
  const double peak = metric_peak(a, b);
  return 10.0 * std::log10(peak * peak / mse);
}

Eigen::Array<double, 7, 1> ssim_gaussian_taps() {
  Eigen::Array<double, 7, 1> g;
  for (int i = 0; i < kWindow; ++i) {
    const double d = i - 3;
    g[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
  }
  return g / g.sum();
}

double ssim3d(const Volume& a, const Volume& b) {
  require_same_shape(a, b);
  require_ssim_extent(a.dims());
  const auto ma = local_moments(a);
  const auto mb = local_moments(b);
  const Eigen::ArrayXd mean_ab = filter_valid(a.voxels() * b.voxels(), a.dims());
  return mean_ssim(ma, mb, mean_ab, metric_peak(a, b));
}

double acc_tau(const Volume& a, const Volume& b, double tau) {
  if (a.dims() != b.dims()) throw ConfigError("volumes have different dims");
  const auto agree = ((a.voxels() > tau) == (b.voxels() > tau)).count();
  return static_cast<double>(agree) / static_cast<double>(a.size());
}

double complexity(const Volume& volume, double low_band_fraction) {
  using Complex = std::complex<double>;
  const Dims& d = volume.dims();
  std::vector<Complex> data(volume.voxels().begin(), volume.voxels().end());

  Eigen::FFT<double> fft;
  const std::array<Eigen::Index, 3> stride{static_cast<Eigen::Index>(d[1]) * d[2], d[2], 1};
  for (int axis = 0; axis < 3; ++axis) {
    const int n = d[axis];
    if (n == 1) continue;
    std::vector<Complex> line(n), spectrum;
    for (Eigen::Index start = 0; start < volume.size(); ++start) {
      // visit each line once, from its first element
      if ((start / stride[axis]) % n != 0) continue;
      for (int i = 0; i < n; ++i) line[i] = data[start + i * stride[axis]];
      fft.fwd(spectrum, line);
      for (int i = 0; i < n; ++i) data[start + i * stride[axis]] = spectrum[i];
    }
  }

  auto in_band = [&](int k, int n) {
    const int f = k <= n / 2 ? k : k - n;
    return std::abs(static_cast<double>(f)) <= low_band_fraction * n;
  };
  double total = 0.0;
  double low = 0.0;
  Eigen::Index i = 0;
  for (int z = 0; z < d[0]; ++z) {
    for (int y = 0; y < d[1]; ++y) {
      for (int x = 0; x < d[2]; ++x, ++i) {
        const double e = std::norm(data[i]);
        total += e;
        if (in_band(z, d[0]) && in_band(y, d[1]) && in_band(x, d[2])) low += e;
      }
    }
  }
  if (total <= 0.0) return 0.0;
  return std::clamp(1.0 - low / total, 0.0, 1.0);
}

RegionSimilarity region_similarity(const Volume& volume, int levels) {
  const auto regions = partition_octree(volume.dims(), levels);
  const auto extent = regions.front().extent();
  require_ssim_extent(Dims{extent[0], extent[1], extent[2]});
  const Eigen::Index n = static_cast<Eigen::Index>(regions.size());
  if (n < 2) throw ConfigError("region similarity needs at least two regions (levels >= 2)");

  std::vector<Volume> blocks;
  std::vector<LocalMoments> moments;
  blocks.reserve(regions.size());
  for (const Region& r : regions) {
    blocks.push_back(extract_region(volume, r));
    moments.push_back(local_moments(blocks.back()));
  }
  const double peak = metric_peak(volume, volume);

  RegionSimilarity out;
  out.raw = Eigen::MatrixXd::Ones(n, n);
  double sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const Eigen::ArrayXd mean_ab =
          filter_valid(blocks[i].voxels() * blocks[j].voxels(), blocks[i].dims());
      const double s = mean_ssim(moments[i], moments[j], mean_ab, peak);
      out.raw(i, j) = out.raw(j, i) = s;
      sum += 2.0 * s;
    }
  }

  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;
      lo = std::min(lo, out.raw(i, j));
      hi = std::max(hi, out.raw(i, j));
    }
  }
  out.normalized = Eigen::MatrixXd::Ones(n, n);
  if (hi > lo) {
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        if (i != j) out.normalized(i, j) = (out.raw(i, j) - lo) / (hi - lo);
      }
    }
  }
  out.region_scores.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    out.region_scores[i] = (out.normalized.row(i).sum() - out.normalized(i, i)) / static_cast<double>(n - 1);
  }
  const double mean_raw = sum / static_cast<double>(n * (n - 1));
  out.global_consistency = std::clamp((mean_raw + 1.0) / 2.0, 0.0, 1.0);
  return out;
}

double suggest_inter_ratio(double global_consistency) {
  if (global_consistency > 0.7) return 1.2;
  if (global_consistency < 0.6) return 0.8;
  return 1.0;
}

}  // namespace treeinr
