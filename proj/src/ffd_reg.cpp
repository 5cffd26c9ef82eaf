#include "dceus/ffd_reg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/LU>

#include "dceus/pyramid.hpp"

namespace dceus {

void FfdConfig::validate() const {
  if (bins < 2) throw ConfigError("ffd: bins must be >= 2");
  if (!(control_spacing_voxels > 0.0)) throw ConfigError("ffd: control spacing must be positive");
  if (!(bending_weight >= 0.0) || !(log_jacobian_weight >= 0.0))
    throw ConfigError("ffd: penalty weights must be >= 0");
  if (!(bending_weight + log_jacobian_weight < 1.0))
    throw ConfigError("ffd: bending_weight + log_jacobian_weight must be < 1");
  if (levels < 1) throw ConfigError("ffd: levels must be >= 1");
  if (max_iterations_per_level < 0) throw ConfigError("ffd: max_iterations_per_level must be >= 0");
  if (!(initial_step_voxels > 0.0) || !(min_step_voxels > 0.0) ||
      !(min_step_voxels <= initial_step_voxels))
    throw ConfigError("ffd: need 0 < min_step_voxels <= initial_step_voxels");
  if (!(objective_tolerance >= 0.0)) throw ConfigError("ffd: objective_tolerance must be >= 0");
  if (stall_iterations < 1) throw ConfigError("ffd: stall_iterations must be >= 1");
  if (!(range_padding >= 0.0)) throw ConfigError("ffd: range_padding must be >= 0");
}

namespace {

double dot(const Coefficients& a, const Coefficients& b) {
  double s = 0.0;
  for (int c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < a[c].size(); ++i) s += a[c][i] * b[c][i];
  return s;
}

double max_point_norm(const Coefficients& a) {
  double m = 0.0;
  for (std::size_t i = 0; i < a[0].size(); ++i)
    m = std::max(m, std::sqrt(a[0][i] * a[0][i] + a[1][i] * a[1][i] + a[2][i] * a[2][i]));
  return m;
}

Coefficients axpy(const Coefficients& x, double alpha, const Coefficients& d) {
  Coefficients out = x;
  for (int c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < out[c].size(); ++i) out[c][i] += alpha * d[c][i];
  return out;
}

}  // namespace

FfdObjective::FfdObjective(const Volume3& ref, const Volume3& flt, const Mask3* mask,
                           const BSplineGrid& layout, const FfdConfig& cfg)
    : flt_(flt),
      cfg_(cfg),
      layout_(layout),
      geometry_(ref.geometry()),
      sampler_(flt, cfg.interpolation),
      bending_(layout) {
  cfg_.validate();
  require_same_grid(ref.geometry(), flt.geometry(), "ffd objective");
  if (mask) require_same_grid(ref.geometry(), mask->geometry(), "ffd objective mask");
  if ((geometry_.origin - layout.reference.origin).norm() > 1e-6)
    throw GeometryError("ffd objective: image and lattice origins differ");

  const Index3& d = geometry_.dims;
  Index3 lo{0, 0, 0}, hi{d[0] - 1, d[1] - 1, d[2] - 1};
  const bool use_mask = mask && !mask->empty();
  if (use_mask) std::tie(lo, hi) = *mask->bounding_box();
  sim_box_ = make_box(lo, hi);


  const std::size_t n = sim_box_.count();
  ref_values_.resize(n);
  base_valid_.assign(n, 0);
  init_points_.resize(n);
  std::size_t i = 0;
  for (int z = 0; z < sim_box_.size[2]; ++z)
    for (int y = 0; y < sim_box_.size[1]; ++y)
      for (int x = 0; x < sim_box_.size[0]; ++x, ++i) {
        const int gx = lo[0] + x, gy = lo[1] + y, gz = lo[2] + z;
        ref_values_[i] = ref(gx, gy, gz);
        base_valid_[i] = (!use_mask || (*mask)(gx, gy, gz)) ? 1 : 0;
        init_points_[i] = layout.init.apply(geometry_.to_physical(gx, gy, gz));
      }

  ref_range_ = sample_range(ref_values_, base_valid_);
  if (!(ref_range_.width() > 0.0))
    throw DegenerateError("ffd: reference intensities are constant over the region");

  // Floating range from the initial overlap, widened so small moves stay inside.
  std::vector<double> flt0(n, 0.0);
  std::vector<std::uint8_t> valid0 = base_valid_;
  for (std::size_t k = 0; k < n; ++k) {
    if (!valid0[k]) continue;
    const Vec3 v = geometry_.to_voxel(init_points_[k]);
    if (sampler_.inside(v))
      flt0[k] = sampler_.value(v);
    else
      valid0[k] = 0;
  }
  if (std::none_of(valid0.begin(), valid0.end(), [](std::uint8_t v) { return v != 0; }))
    throw DegenerateError("ffd: no overlap between reference region and floating image");
  flt_range_ = sample_range(flt0, valid0);
  if (!(flt_range_.width() > 0.0))
    throw DegenerateError("ffd: floating intensities are constant over the overlap");
  const double pad = cfg_.range_padding * flt_range_.width();
  flt_range_.min -= pad;
  flt_range_.max += pad;
}

FfdObjective::Box FfdObjective::make_box(Index3 lo, Index3 hi) const {
  Box b;
  b.lo = lo;
  for (int a = 0; a < 3; ++a) {
    b.size[a] = hi[a] - lo[a] + 1;
    b.basis[a] = detail::make_axis_basis(b.size[a], lo[a] * geometry_.spacing[a], geometry_.spacing[a],
                                         layout_.control_spacing[a], layout_.control_dims[a]);
  }
  return b;
}

FfdTerms FfdObjective::evaluate(const Coefficients& coeff, Coefficients* gradient) const {
  FfdTerms terms;
  const Index3& cd = layout_.control_dims;
  for (int c = 0; c < 3; ++c)
    if (coeff[c].size() != layout_.control_count())
      throw GeometryError("ffd objective: coefficient count mismatch");

  const auto& [bx, by, bz] = sim_box_.basis;
  const std::size_t n = sim_box_.count();
  std::array<std::vector<double>, 3> u;
  std::array<std::vector<double>, 9> du;  // du[3 * c + a] = d u_c / d x_a
  for (int c = 0; c < 3; ++c) {
    u[c].resize(n);
    for (int a = 0; a < 3; ++a) du[3 * c + a].resize(n);
    detail::evaluate_separable(coeff[c], cd, bx, by, bz, u[c].data(), du[3 * c].data(),
                               du[3 * c + 1].data(), du[3 * c + 2].data());
  }
  auto jacobian = [&](std::size_t i) {
    Mat3 j;
    for (int c = 0; c < 3; ++c)
      for (int a = 0; a < 3; ++a) j(c, a) = du[3 * c + a][i] + (c == a ? 1.0 : 0.0);
    return j;
  };

  // A fold rejects the point before any similarity work.
  std::vector<double> logdet(n);
  double lj = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double det = jacobian(i).determinant();
    if (!(det > 0.0)) {
      terms.log_jacobian = std::numeric_limits<double>::infinity();
      terms.total = -std::numeric_limits<double>::infinity();
      return terms;
    }
    logdet[i] = std::log(det);
    lj += logdet[i] * logdet[i];
  }
  lj /= static_cast<double>(n);
  terms.log_jacobian = lj;

  std::vector<double> flt_values(n, 0.0);
  std::vector<std::uint8_t> valid = base_valid_;
  std::vector<Vec3> flt_grad(gradient ? n : 0, Vec3::Zero());
  for (std::size_t i = 0; i < n; ++i) {
    if (!valid[i]) continue;
    const Vec3 p = init_points_[i] + Vec3(u[0][i], u[1][i], u[2][i]);
    const Vec3 v = geometry_.to_voxel(p);
    if (!sampler_.inside(v)) {
      valid[i] = 0;
      continue;
    }
    if (gradient) {
      Vec3 g;
      flt_values[i] = sampler_.value_and_gradient(v, g);
      flt_grad[i] = g.cwiseQuotient(geometry_.spacing);
    } else {
      flt_values[i] = sampler_.value(v);
    }
    ++terms.samples;
  }
  if (terms.samples == 0) throw DegenerateError("ffd: warped region left the floating image");
  const JointHistogram hist =
      histogram_from_samples(ref_values_, flt_values, valid, cfg_.bins, ref_range_, flt_range_);
  terms.nmi = nmi(hist);

  std::array<std::vector<double>, 3> be_grad;
  terms.bending = bending_.evaluate(coeff, gradient ? &be_grad : nullptr);

  const double ws = cfg_.similarity_weight();
  terms.total = ws * terms.nmi - cfg_.bending_weight * terms.bending - cfg_.log_jacobian_weight * lj;
  if (!gradient) return terms;

  // Similarity drives the value taps, the log-Jacobian (via J^{-T}) the slopes.
  const std::vector<double> dn = nmi_gradient_samples(ref_values_, flt_values, valid, hist);
  const double f = -cfg_.log_jacobian_weight * 2.0 / static_cast<double>(n);
  std::array<std::vector<double>, 3> gv;
  std::array<std::vector<double>, 9> gj;
  for (auto& v : gv) v.resize(n);
  for (auto& v : gj) v.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Mat3 inv = jacobian(i).inverse();
    for (int c = 0; c < 3; ++c) {
      gv[c][i] = valid[i] ? ws * dn[i] * flt_grad[i][c] : 0.0;
      for (int a = 0; a < 3; ++a) gj[3 * c + a][i] = f * logdet[i] * inv(a, c);
    }
  }
  for (int c = 0; c < 3; ++c) {
    auto& g = (*gradient)[c];
    g.assign(coeff[c].size(), 0.0);
    detail::accumulate_separable(g, cd, bx, by, bz, gv[c].data(), gj[3 * c].data(),
                                 gj[3 * c + 1].data(), gj[3 * c + 2].data());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] -= cfg_.bending_weight * be_grad[c][i];
  }
  return terms;
}

namespace {

/// Nonlinear conjugate-gradient ascent on one level. Returns true when the
/// line search or the stall test stopped it before the iteration cap.
bool optimize_level(const FfdObjective& objective, BSplineGrid& grid, const FfdConfig& cfg,
                    double voxel_mm, std::vector<double>& trace, int& iterations) {
  Coefficients g;
  FfdTerms cur = objective.evaluate(grid.coefficients, &g);
  if (!std::isfinite(cur.total)) return true;
  trace.push_back(cur.total);

  const double min_step = cfg.min_step_voxels * voxel_mm;
  const double max_step = 0.5 * grid.control_spacing.minCoeff();
  double step = cfg.initial_step_voxels * voxel_mm;
  Coefficients d = g;
  int stalls = 0;
  for (int it = 0; it < cfg.max_iterations_per_level; ++it) {
    if (dot(g, d) <= 0.0) d = g;
    const double norm = max_point_norm(d);
    if (!(norm > 0.0)) return true;
    const double scale = 1.0 / norm;

    // The first trial carries the gradient; later (shorter) trials do not.
    double alpha = std::min(2.0 * step, max_step);
    bool accepted = false;
    bool have_gradient = false;
    Coefficients trial, g_new;
    FfdTerms next;
    for (bool first = true; alpha >= min_step; first = false, alpha *= 0.5) {
      trial = axpy(grid.coefficients, alpha * scale, d);
      next = objective.evaluate(trial, first ? &g_new : nullptr);
      if (std::isfinite(next.total) && next.total > cur.total) {
        accepted = true;
        have_gradient = first;
        break;
      }
    }
    ++iterations;
    if (!accepted) return true;

    step = alpha;
    if (!have_gradient) next = objective.evaluate(trial, &g_new);
    const double gain = next.total - cur.total;
    grid.coefficients = std::move(trial);
    cur = next;
    trace.push_back(cur.total);

    const double gg = dot(g, g);
    double beta = 0.0;
    if (gg > 0.0) {
      double num = 0.0;
      for (int c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < g_new[c].size(); ++i) num += g_new[c][i] * (g_new[c][i] - g[c][i]);
      beta = std::max(0.0, num / gg);
    }
    for (int c = 0; c < 3; ++c)
      for (std::size_t i = 0; i < d[c].size(); ++i) d[c][i] = g_new[c][i] + beta * d[c][i];
    g = std::move(g_new);

    if (gain <= cfg.objective_tolerance * std::max(std::abs(cur.total), 1e-12)) {
      if (++stalls >= cfg.stall_iterations) return true;
    } else {
      stalls = 0;
    }
  }
  return false;
}

}  // namespace

FfdResult ffd_register(const Volume3& ref, const Volume3& flt,
                       const std::optional<AffineTransform>& init, const Mask3* mask,
                       const FfdConfig& cfg) {
  cfg.validate();
  require_same_grid(ref.geometry(), flt.geometry(), "ffd_register");
  if (mask) require_same_grid(ref.geometry(), mask->geometry(), "ffd_register mask");

  const Geometry& g = ref.geometry();
  const int levels = feasible_levels(g, cfg.levels);
  const std::vector<Volume3> ref_pyr = build_pyramid(ref, levels);
  const std::vector<Volume3> flt_pyr = build_pyramid(flt, levels);
  std::vector<Mask3> mask_pyr;
  if (mask) mask_pyr = build_mask_pyramid(*mask, levels);

  FfdResult result;
  const double coarse = cfg.control_spacing_voxels * std::ldexp(1.0, levels - 1);
  BSplineGrid grid = BSplineGrid::create(g, coarse * g.spacing, init.value_or(AffineTransform::identity()));

  for (int level = levels - 1; level >= 0; --level) {
    const Mask3* level_mask = nullptr;
    if (mask && !mask_pyr[level].empty()) level_mask = &mask_pyr[level];
    const FfdObjective objective(ref_pyr[level], flt_pyr[level], level_mask, grid, cfg);
    const double voxel_mm = ref_pyr[level].geometry().spacing.minCoeff();
    result.objective_trace.emplace_back();
    const bool done = optimize_level(objective, grid, cfg, voxel_mm, result.objective_trace.back(),
                                     result.iterations);
    if (!done) {
      result.converged = false;
      result.warnings.push_back("ffd: iteration cap reached at level " + std::to_string(level));
    }
    if (level > 0) grid = grid.refined();
  }
  if (!grid.all_finite()) throw DegenerateError("ffd: non-finite control displacements");
  result.grid = std::move(grid);
  return result;
}

}  // namespace dceus
