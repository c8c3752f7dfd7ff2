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

#ifndef TREEINR_METRICS_HPP
#define TREEINR_METRICS_HPP

#include <Eigen/Core>

#include <limits>
#include <map>
#include <optional>

#include "treeinr/volume.hpp"

namespace treeinr {

/// Returned by psnr() for identical volumes.
inline constexpr double kInfinitePsnr = std::numeric_limits<double>::infinity();

struct MetricReport {
  std::optional<double> psnr;
  std::optional<double> ssim;
  std::map<double, double> acc;  // threshold -> accuracy
  std::optional<double> complexity;
  std::optional<double> global_consistency;
};

/// Signal peak used by psnr/ssim3d: 2^bits - 1 for integer dtypes, otherwise the
/// intensity range spanned by both volumes.
double metric_peak(const Volume& a, const Volume& b);

/// 10 log10(peak^2 / MSE) over raw intensities; kInfinitePsnr when MSE is 0.
double psnr(const Volume& a, const Volume& b);

/// Normalized 7-tap Gaussian (sigma 1.5); the 3-D window is its outer cube.
Eigen::Array<double, 7, 1> ssim_gaussian_taps();

/// Mean local SSIM over every window centre whose 7x7x7 window fits inside
/// the grid (no padding). C1 = (0.01 peak)^2, C2 = (0.03 peak)^2.
double ssim3d(const Volume& a, const Volume& b);

/// Fraction of voxels whose binarizations (intensity > tau) agree.
double acc_tau(const Volume& a, const Volume& b, double tau);

/// Share of spectral energy outside the centred low-frequency box
/// |f_axis| <= low_band_fraction * D_axis (DC inside). 0 for constant volumes.
double complexity(const Volume& volume, double low_band_fraction = 0.25);

struct RegionSimilarity {
  /// Pairwise SSIM between leaf regions in z-curve order; diagonal set to 1
  /// and excluded from every statistic below.
  Eigen::MatrixXd raw;
  /// Off-diagonal entries min-max normalized to [0, 1] (all 1 if constant).
  Eigen::MatrixXd normalized;
  /// Row sums of `normalized` over j != i, divided by n - 1.
  Eigen::VectorXd region_scores;
  /// Mean raw off-diagonal SSIM mapped from [-1, 1] to [0, 1].
  double global_consistency = 0.0;
};

/// Similarity between the 8^(levels-1) sub-regions of `volume`.
RegionSimilarity region_similarity(const Volume& volume, int levels = 3);

/// 1.2 above 0.7 consistency, 0.8 below 0.6, otherwise 1.0.
double suggest_inter_ratio(double global_consistency);

}  // namespace treeinr

#endif  // TREEINR_METRICS_HPP
