#include "dceus/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Core>
#include <unsupported/Eigen/NonLinearOptimization>
#include <unsupported/Eigen/NumericalDiff>

#include "dceus/similarity.hpp"

namespace dceus {

double jaccard(const Mask3& a, const Mask3& b) {
  require_same_grid(a.geometry(), b.geometry(), "jaccard");
  if (a.empty() || b.empty()) throw DegenerateError("jaccard: empty mask");
  std::size_t inter = 0, uni = 0;
  const auto da = a.data(), db = b.data();
  for (std::size_t i = 0; i < da.size(); ++i) {
    const bool x = da[i] != 0, y = db[i] != 0;
    inter += (x && y);
    uni += (x || y);
  }
  return static_cast<double>(inter) / static_cast<double>(uni);
}

namespace {

void mean_stdev(const std::vector<double>& v, double& mean, double& stdev) {
  mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  stdev = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
}

}  // namespace

OverlapReport pairwise_overlap(std::span<const Mask3> masks, std::vector<std::size_t> frames) {
  const std::size_t n = masks.size();
  if (n < 2) throw InputError("pairwise_overlap: need at least two masks");
  for (std::size_t i = 0; i < n; ++i) {
    require_same_grid(masks[0].geometry(), masks[i].geometry(), "pairwise_overlap");
    if (masks[i].empty()) throw DegenerateError("pairwise_overlap: mask " + std::to_string(i) + " is empty");
  }
  if (frames.empty()) {
    frames.resize(n);
    for (std::size_t i = 0; i < n; ++i) frames[i] = i;
  }
  if (frames.size() != n) throw InputError("pairwise_overlap: label count mismatch");
  OverlapReport r;
  r.frames = std::move(frames);
  r.matrix.assign(n * n, 1.0);
  std::vector<double> values;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = jaccard(masks[i], masks[j]);
      r.matrix[i * n + j] = r.matrix[j * n + i] = v;
      values.push_back(v);
    }
  mean_stdev(values, r.mean, r.stdev);
  return r;
}

NccSummary pairwise_ncc(const Cine4& cine, std::size_t first, std::size_t last, const Mask3* mask) {
  if (last >= cine.frame_count() || first >= last)
    throw InputError("pairwise_ncc: range " + std::to_string(first) + "-" + std::to_string(last) +
                     " is not within the " + std::to_string(cine.frame_count()) + "-frame cine");
  std::vector<double> values;
  for (std::size_t i = first; i <= last; ++i)
    for (std::size_t j = i + 1; j <= last; ++j) values.push_back(ncc(cine.frame(i), cine.frame(j), mask));
  NccSummary s;
  s.pairs = values.size();
  mean_stdev(values, s.mean, s.stdev);
  return s;
}

double global_max(const Cine4& cine) {
  double m = -std::numeric_limits<double>::infinity();
  for (const auto& f : cine.frames())
    for (float v : f.data()) m = std::max(m, static_cast<double>(v));
  return m;
}

TimeIntensityCurve extract_tic(const Cine4& cine, const Mask3& roi, std::optional<double> display_max) {
  require_same_grid(cine.geometry(), roi.geometry(), "extract_tic");
  if (roi.empty()) throw DegenerateError("extract_tic: empty roi");
  const double norm = display_max ? *display_max : global_max(cine);
  if (!(norm > 0.0)) throw DegenerateError("extract_tic: normalization value must be positive");
  TimeIntensityCurve tic;
  tic.times = cine.times();
  tic.roi_voxels = roi.count();
  for (const auto& f : cine.frames()) tic.intensities.push_back(frame_mean_intensity(f, &roi) / norm);
  return tic;
}

double lognormal_model(const LognormalParams& p, double t) {
  const double tau = t - p.t0;
  if (!(tau > 0.0)) return p.offset;
  const double z = (std::log(tau) - p.mu) / p.sigma;
  return p.offset + p.scale * std::exp(-0.5 * z * z) / (tau * p.sigma * std::sqrt(2.0 * std::numbers::pi));
}

LognormalFit score_lognormal(const LognormalParams& params, std::span<const double> times,
                             std::span<const double> values) {
  LognormalFit f;
  f.params = params;
  f.samples = values.size();
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double sst = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double r = values[i] - lognormal_model(params, times[i]);
    f.sse += r * r;
    sst += (values[i] - mean) * (values[i] - mean);
  }
  f.rmse = std::sqrt(f.sse / static_cast<double>(values.size()));
  f.r_squared = sst > 0.0 ? 1.0 - f.sse / sst : 0.0;
  return f;
}

namespace {

// x = (t0, mu, log sigma, log scale, q) with offset = q^2.
LognormalParams unpack(const Eigen::VectorXd& x) {
  return {x[0], x[1], std::exp(x[2]), std::exp(x[3]), x[4] * x[4]};
}

struct Residuals {
  using Scalar = double;
  enum { InputsAtCompileTime = Eigen::Dynamic, ValuesAtCompileTime = Eigen::Dynamic };
  using InputType = Eigen::VectorXd;
  using ValueType = Eigen::VectorXd;
  using JacobianType = Eigen::MatrixXd;

  std::span<const double> t, y;
  int inputs() const { return 5; }
  int values() const { return static_cast<int>(y.size()); }
  int operator()(const Eigen::VectorXd& x, Eigen::VectorXd& r) const {
    const LognormalParams p = unpack(x);
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double v = lognormal_model(p, t[i]) - y[i];
      r[static_cast<Eigen::Index>(i)] = std::isfinite(v) ? v : 1e6;
    }
    return 0;
  }
};

LognormalParams initial_guess(std::span<const double> t, std::span<const double> y, double t0) {
  LognormalParams p;
  p.t0 = t0;
  double off = 0.0;
  int count = 0;
  for (std::size_t i = 0; i < y.size(); ++i)
    if (t[i] <= t0) {
      off += y[i];
      ++count;
    }
  p.offset = count ? std::max(off / count, 0.0) : std::max(*std::min_element(y.begin(), y.end()), 0.0);
  double sw = 0.0, swl = 0.0, area = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double tau = t[i] - t0;
    if (tau <= 0.0) continue;
    const double w = std::max(y[i] - p.offset, 0.0);
    sw += w;
    swl += w * std::log(tau);
    const double dt = i + 1 < y.size() ? t[i + 1] - t[i] : t[i] - t[i - 1];
    area += w * dt;
  }
  p.mu = sw > 0.0 ? swl / sw : 0.0;
  double var = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double tau = t[i] - t0;
    if (tau <= 0.0) continue;
    const double w = std::max(y[i] - p.offset, 0.0);
    const double d = std::log(tau) - p.mu;
    var += w * d * d;
  }
  p.sigma = std::max(sw > 0.0 ? std::sqrt(var / sw) : 1.0, 0.05);
  p.scale = std::max(area, 1e-9);
  return p;
}

}  // namespace

LognormalFit fit_lognormal(std::span<const double> times, std::span<const double> values) {
  if (times.size() != values.size()) throw InputError("fit_lognormal: times and values differ in length");
  if (values.size() < 8) throw InputError("fit_lognormal: need at least 8 samples");
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i]) || !std::isfinite(times[i])) throw InputError("fit_lognormal: non-finite sample");
    if (i > 0 && !(times[i] > times[i - 1])) throw InputError("fit_lognormal: times must increase");
  }
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  if (!(*hi_it > *lo_it)) throw DegenerateError("fit_lognormal: flat curve");

  // Onset: last sample before the peak still below 10% of the rise.
  const std::size_t peak = static_cast<std::size_t>(hi_it - values.begin());
  const double base = *std::min_element(values.begin(), values.begin() + peak + 1);
  const double thr = base + 0.1 * (*hi_it - base);
  std::size_t onset = 0;
  for (std::size_t i = 0; i < peak; ++i)
    if (values[i] <= thr) onset = i;
  const double rise = std::max(times[peak] - times[onset], times.size() > 1 ? times[1] - times[0] : 1.0);

  Residuals fn{times, values};
  LognormalFit best;
  best.sse = std::numeric_limits<double>::infinity();
  for (int k = 0; k < 4; ++k) {
    const double t0 = times[onset] - 0.25 * k * rise;
    const LognormalParams g = initial_guess(times, values, t0);
    Eigen::VectorXd x(5);
    x << g.t0, g.mu, std::log(g.sigma), std::log(g.scale), std::sqrt(g.offset);
    Eigen::NumericalDiff<Residuals> diff(fn);
    Eigen::LevenbergMarquardt<Eigen::NumericalDiff<Residuals>> lm(diff);
    lm.parameters.maxfev = 4000;
    lm.parameters.xtol = 1e-12;
    lm.parameters.ftol = 1e-12;
    const auto status = lm.minimize(x);
    if (!x.allFinite()) continue;
    LognormalFit f = score_lognormal(unpack(x), times, values);
    f.converged = status == Eigen::LevenbergMarquardtSpace::RelativeReductionTooSmall ||
                  status == Eigen::LevenbergMarquardtSpace::RelativeErrorTooSmall ||
                  status == Eigen::LevenbergMarquardtSpace::RelativeErrorAndReductionTooSmall ||
                  status == Eigen::LevenbergMarquardtSpace::CosinusTooSmall;
    if (f.sse < best.sse) best = f;
  }
  if (!std::isfinite(best.sse)) throw DegenerateError("fit_lognormal: no finite fit");
  return best;
}

LognormalFit fit_lognormal(const TimeIntensityCurve& tic) {
  return fit_lognormal(tic.times, tic.intensities);
}

}  // namespace dceus
