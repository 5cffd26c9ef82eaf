#pragma once

#include <optional>
#include <span>
#include <vector>

#include "dceus/volume.hpp"

namespace dceus {

/// |A ∩ B| / |A ∪ B|; both masks nonempty and on one grid.
double jaccard(const Mask3& a, const Mask3& b);

struct OverlapReport {
  std::vector<std::size_t> frames;
  std::vector<double> matrix;  ///< row-major, fraction in [0, 1]
  double mean = 0.0;           ///< over unordered pairs
  double stdev = 0.0;
  double at(std::size_t i, std::size_t j) const { return matrix[i * frames.size() + j]; }
};

/// Jaccard overlap of every pair. `frames` labels the masks (0..n-1 by default).
OverlapReport pairwise_overlap(std::span<const Mask3> masks, std::vector<std::size_t> frames = {});

struct NccSummary {
  double mean = 0.0;
  double stdev = 0.0;
  std::size_t pairs = 0;
};

/// NCC over all unordered pairs of frames first..last (inclusive).
NccSummary pairwise_ncc(const Cine4& cine, std::size_t first, std::size_t last,
                        const Mask3* mask = nullptr);

struct TimeIntensityCurve {
  std::vector<double> times;
  std::vector<double> intensities;
  std::size_t roi_voxels = 0;
};

/// Mean ROI intensity per frame divided by `display_max` (the cine's global
/// maximum when not given).
TimeIntensityCurve extract_tic(const Cine4& cine, const Mask3& roi,
                               std::optional<double> display_max = std::nullopt);

/// Largest voxel value over all frames.
double global_max(const Cine4& cine);

struct LognormalParams {
  double t0 = 0.0;
  double mu = 0.0;
  double sigma = 1.0;
  double scale = 1.0;
  double offset = 0.0;
};

/// offset + scale * lognormal density of (t - t0); offset alone for t <= t0.
double lognormal_model(const LognormalParams& p, double t);

struct LognormalFit {
  LognormalParams params;
  double sse = 0.0;
  double rmse = 0.0;
  double r_squared = 0.0;
  std::size_t samples = 0;
  bool converged = false;
};

/// Levenberg-Marquardt fit from a moment-based starting point.
LognormalFit fit_lognormal(std::span<const double> times, std::span<const double> values);
LognormalFit fit_lognormal(const TimeIntensityCurve& tic);

/// SSE, RMSE and R² of `params` against the data.
LognormalFit score_lognormal(const LognormalParams& params, std::span<const double> times,
                             std::span<const double> values);

}  // namespace dceus
