#include "dceus/affine_reg.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Dense>

#include "dceus/pyramid.hpp"
#include "dceus/resample.hpp"

namespace dceus {

namespace {

/// Below this many correspondences only a translation is estimated.
constexpr std::size_t kMinAffineMatches = 48;

/// Summed-area tables for block sums, sums of squares, and invalid-voxel counts.
class IntegralImages {
 public:
  IntegralImages(const Volume3& v, std::span<const std::uint8_t> valid)
      : nx_(v.dims()[0] + 1), ny_(v.dims()[1] + 1), nz_(v.dims()[2] + 1),
        sum_(static_cast<std::size_t>(nx_) * ny_ * nz_, 0.0),
        sq_(sum_.size(), 0.0),
        bad_(valid.empty() ? 0 : sum_.size(), 0) {
    const Geometry& g = v.geometry();
    for (int z = 1; z < nz_; ++z)
      for (int y = 1; y < ny_; ++y)
        for (int x = 1; x < nx_; ++x) {
          const std::size_t src = g.index(x - 1, y - 1, z - 1);
          const double val = v[src];
          const std::size_t i = at(x, y, z);
          sum_[i] = val + inclusion(sum_, x, y, z);
          sq_[i] = val * val + inclusion(sq_, x, y, z);
          if (!bad_.empty()) bad_[i] = (valid[src] ? 0 : 1) + inclusion(bad_, x, y, z);
        }
  }

  double sum(const Index3& c, int b) const { return box(sum_, c, b); }
  double sum_sq(const Index3& c, int b) const { return box(sq_, c, b); }
  bool all_valid(const Index3& c, int b) const { return bad_.empty() || box(bad_, c, b) == 0; }

 private:
  std::size_t at(int x, int y, int z) const {
    return (static_cast<std::size_t>(z) * ny_ + y) * nx_ + x;
  }
  template <typename T>
  T inclusion(const std::vector<T>& s, int x, int y, int z) const {
    return s[at(x - 1, y, z)] + s[at(x, y - 1, z)] + s[at(x, y, z - 1)] - s[at(x - 1, y - 1, z)] -
           s[at(x - 1, y, z - 1)] - s[at(x, y - 1, z - 1)] + s[at(x - 1, y - 1, z - 1)];
  }
  template <typename T>
  T box(const std::vector<T>& s, const Index3& c, int b) const {
    const int x0 = c[0], y0 = c[1], z0 = c[2];
    const int x1 = x0 + b, y1 = y0 + b, z1 = z0 + b;
    return s[at(x1, y1, z1)] - s[at(x0, y1, z1)] - s[at(x1, y0, z1)] - s[at(x1, y1, z0)] +
           s[at(x0, y0, z1)] + s[at(x0, y1, z0)] + s[at(x1, y0, z0)] - s[at(x0, y0, z0)];
  }

  int nx_, ny_, nz_;
  std::vector<double> sum_;
  std::vector<double> sq_;
  std::vector<std::int64_t> bad_;
};

Vec3 block_center(const Geometry& g, const Index3& corner, int b) {
  const double h = 0.5 * (b - 1);
  return g.to_physical(Vec3(corner[0] + h, corner[1] + h, corner[2] + h));
}

std::vector<Index3> select_blocks_impl(const Volume3& volume, const Mask3* mask,
                                       std::span<const std::uint8_t> valid,
                                       const AffineRegConfig& cfg) {
  const Geometry& g = volume.geometry();
  const int b = cfg.block_size;
  for (int a = 0; a < 3; ++a)
    if (g.dims[a] < b) throw DegenerateError("select_blocks: volume smaller than one block");
  if (mask) require_same_grid(g, mask->geometry(), "select_blocks");

  struct Candidate {
    Index3 corner;
    double variance;
  };
  std::vector<Candidate> candidates;
  const int n = b * b * b;
  for (int bz = 0; bz + b <= g.dims[2]; bz += b)
    for (int by = 0; by + b <= g.dims[1]; by += b)
      for (int bx = 0; bx + b <= g.dims[0]; bx += b) {
        int in_mask = 0;
        bool all_valid = true;
        double s = 0.0, ss = 0.0;
        for (int z = bz; z < bz + b; ++z)
          for (int y = by; y < by + b; ++y)
            for (int x = bx; x < bx + b; ++x) {
              const std::size_t i = g.index(x, y, z);
              if (mask && (*mask)[i]) ++in_mask;
              if (!valid.empty() && !valid[i]) all_valid = false;
              const double v = volume[i];
              s += v;
              ss += v * v;
            }
        if (mask && 2 * in_mask < n) continue;
        if (!all_valid) continue;
        const double mean = s / n;
        candidates.push_back({{bx, by, bz}, std::max(0.0, ss / n - mean * mean)});
      }
  if (candidates.empty()) throw DegenerateError("select_blocks: no blocks survive masking");
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const Candidate& a, const Candidate& c) { return a.variance > c.variance; });
  const auto keep = static_cast<std::size_t>(
      std::ceil(cfg.block_keep_fraction * static_cast<double>(candidates.size())));
  std::vector<Index3> out;
  out.reserve(keep);
  for (std::size_t i = 0; i < std::min(keep, candidates.size()); ++i) out.push_back(candidates[i].corner);
  return out;
}

/// Sub-voxel correction of an integer match: one Gauss-Newton step of
/// source ~ gain * target(x + delta) about the target block at `corner`,
/// with the target gradient from central differences. Each component is
/// clamped to half a voxel; a flat or ill-conditioned block yields zero.
Vec3 subvoxel_offset(const Volume3& target, const Index3& corner, int b,
                     const std::vector<double>& centred_source, double source_norm2) {
  const Index3& d = target.dims();
  auto at = [&](int x, int y, int z) {
    return static_cast<double>(target(std::clamp(x, 0, d[0] - 1), std::clamp(y, 0, d[1] - 1),
                                      std::clamp(z, 0, d[2] - 1)));
  };
  const int n = b * b * b;
  std::vector<double> t(n);
  std::vector<Vec3> grad(n);
  double mean = 0.0;
  for (int z = 0, k = 0; z < b; ++z)
    for (int y = 0; y < b; ++y)
      for (int x = 0; x < b; ++x, ++k) {
        const int px = corner[0] + x, py = corner[1] + y, pz = corner[2] + z;
        t[k] = at(px, py, pz);
        grad[k] = 0.5 * Vec3(at(px + 1, py, pz) - at(px - 1, py, pz),
                             at(px, py + 1, pz) - at(px, py - 1, pz),
                             at(px, py, pz + 1) - at(px, py, pz - 1));
        mean += t[k];
      }
  mean /= n;
  Vec3 gmean = Vec3::Zero();
  for (const Vec3& g : grad) gmean += g;
  gmean /= n;
  double var = 0.0;
  for (double& v : t) {
    v -= mean;
    var += v * v;
  }
  if (!(var > 1e-20)) return Vec3::Zero();
  const double gain = std::sqrt(var / source_norm2);
  Mat3 h = Mat3::Zero();
  Vec3 rhs = Vec3::Zero();
  for (int k = 0; k < n; ++k) {
    const Vec3 g = grad[k] - gmean;
    h += g * g.transpose();
    rhs += g * (gain * centred_source[k] - t[k]);
  }
  const Eigen::SelfAdjointEigenSolver<Mat3> eig(h);
  if (!(eig.eigenvalues()[0] > 1e-6 * eig.eigenvalues()[2]) || !(eig.eigenvalues()[2] > 0.0))
    return Vec3::Zero();
  const Vec3 delta = h.ldlt().solve(rhs);
  if (!delta.allFinite()) return Vec3::Zero();
  return delta.cwiseMax(Vec3::Constant(-0.5)).cwiseMin(Vec3::Constant(0.5));
}

/// Largest displacement, in voxels, that `update` applies to the corners of
/// the box [lo, hi] (mm).
double update_norm(const AffineTransform& update, const Vec3& lo, const Vec3& hi, const Vec3& spacing) {
  double worst = 0.0;
  for (int c = 0; c < 8; ++c) {
    const Vec3 p((c & 1) ? hi[0] : lo[0], (c & 2) ? hi[1] : lo[1], (c & 4) ? hi[2] : lo[2]);
    worst = std::max(worst, (update.apply(p) - p).cwiseQuotient(spacing).norm());
  }
  return worst;
}

/// Pull-back warp of `flt` onto its own grid plus a flag per voxel telling
/// whether the sample came from inside the image.
std::pair<Volume3, std::vector<std::uint8_t>> warp_with_validity(const Volume3& flt,
                                                                 const AffineTransform& t) {
  const Geometry& g = flt.geometry();
  const ImageSampler sampler(flt, Interpolation::linear);
  std::vector<float> out(g.voxel_count(), 0.0f);
  std::vector<std::uint8_t> valid(g.voxel_count(), 0);
  const Mat3 from_mm = g.spacing.cwiseInverse().asDiagonal();
  const Mat3 lin = from_mm * t.linear() * g.spacing.asDiagonal();
  const Vec3 off = from_mm * (t.linear() * g.origin + t.offset() - g.origin);
  for (int z = 0; z < g.dims[2]; ++z)
    for (int y = 0; y < g.dims[1]; ++y) {
      const Vec3 row = lin * Vec3(0.0, y, z) + off;
      for (int x = 0; x < g.dims[0]; ++x) {
        const Vec3 v = row + lin.col(0) * x;
        if (!sampler.inside(v)) continue;
        const std::size_t i = g.index(x, y, z);
        out[i] = static_cast<float>(sampler.value(v));
        valid[i] = 1;
      }
    }
  return {Volume3(g, std::move(out)), std::move(valid)};
}

/// Pearson correlation over voxels that are valid and inside the mask.
double masked_ncc(const Volume3& a, const Volume3& b, std::span<const std::uint8_t> valid,
                  const Mask3* mask) {
  double sa = 0.0, sb = 0.0, saa = 0.0, sbb = 0.0, sab = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!valid[i] || (mask && !(*mask)[i])) continue;
    const double x = a[i], y = b[i];
    sa += x;
    sb += y;
    saa += x * x;
    sbb += y * y;
    sab += x * y;
    ++n;
  }
  if (n < 2) return -1.0;
  const double cov = sab - sa * sb / n;
  const double va = saa - sa * sa / n, vb = sbb - sb * sb / n;
  if (!(va > 0.0 && vb > 0.0)) return -1.0;
  return cov / std::sqrt(va * vb);
}

/// Trimmed mean offset; used when too few matches constrain a full affine.
AffineTransform trimmed_translation(std::span<const BlockCorrespondence> corr, double trim) {
  std::vector<Vec3> d;
  d.reserve(corr.size());
  for (const auto& c : corr) d.push_back(c.matched_center - c.ref_center);
  Vec3 est = Vec3::Zero();
  for (const Vec3& v : d) est += v;
  est /= static_cast<double>(d.size());
  const std::size_t keep =
      std::max<std::size_t>(1, d.size() - static_cast<std::size_t>(std::floor(trim * d.size())));
  for (int step = 0; step < 10; ++step) {
    std::sort(d.begin(), d.end(), [&](const Vec3& a, const Vec3& b) {
      return (a - est).squaredNorm() < (b - est).squaredNorm();
    });
    Vec3 next = Vec3::Zero();
    for (std::size_t i = 0; i < keep; ++i) next += d[i];
    next /= static_cast<double>(keep);
    if ((next - est).norm() < 1e-9) break;
    est = next;
  }
  return AffineTransform::translation(est);
}

}  // namespace

void AffineRegConfig::validate() const {
  if (block_size < 2) throw ConfigError("affine: block_size must be >= 2");
  if (search_radius < 1) throw ConfigError("affine: search_radius must be >= 1");
  if (!(block_keep_fraction > 0.0 && block_keep_fraction <= 1.0))
    throw ConfigError("affine: block_keep_fraction must lie in (0, 1]");
  if (!(lts_trim_fraction >= 0.0 && lts_trim_fraction < 0.5))
    throw ConfigError("affine: lts_trim_fraction must lie in [0, 0.5)");
  if (levels < 1) throw ConfigError("affine: levels must be >= 1");
  if (max_outer_iterations < 1) throw ConfigError("affine: max_outer_iterations must be >= 1");
  if (!(convergence_tol > 0.0)) throw ConfigError("affine: convergence_tol must be positive");
}

std::vector<Index3> select_blocks(const Volume3& volume, const Mask3* mask,
                                  const AffineRegConfig& cfg) {
  cfg.validate();
  return select_blocks_impl(volume, mask, {}, cfg);
}

std::vector<BlockCorrespondence> match_blocks_one_way(const Volume3& source, const Volume3& target,
                                                      std::span<const Index3> blocks,
                                                      const AffineRegConfig& cfg,
                                                      std::span<const std::uint8_t> target_valid) {
  require_same_grid(source.geometry(), target.geometry(), "match_blocks");
  const Geometry& g = source.geometry();
  const int b = cfg.block_size;
  const int r = cfg.search_radius;
  const int side = 2 * r + 1;
  const int n = b * b * b;
  const IntegralImages integral(target, target_valid);
  const std::size_t sy = g.dims[0];
  const std::size_t sz = static_cast<std::size_t>(g.dims[0]) * g.dims[1];
  const float* tdata = target.data().data();

  std::vector<double> centred(n);
  std::vector<BlockCorrespondence> out;
  out.reserve(blocks.size());

  for (const Index3& c : blocks) {
    double mean = 0.0;
    for (int z = 0, k = 0; z < b; ++z)
      for (int y = 0; y < b; ++y)
        for (int x = 0; x < b; ++x, ++k) {
          centred[k] = source(c[0] + x, c[1] + y, c[2] + z);
          mean += centred[k];
        }
    mean /= n;
    double norm2 = 0.0;
    for (double& v : centred) {
      v -= mean;
      norm2 += v * v;
    }
    if (!(norm2 > 1e-20)) continue;  // flat block: nothing to match

    double best = -std::numeric_limits<double>::infinity();
    int best_k = -1;
    for (int dz = -r; dz <= r; ++dz)
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
          const Index3 t{c[0] + dx, c[1] + dy, c[2] + dz};
          if (t[0] < 0 || t[1] < 0 || t[2] < 0 || t[0] + b > g.dims[0] || t[1] + b > g.dims[1] ||
              t[2] + b > g.dims[2])
            continue;
          if (!integral.all_valid(t, b)) continue;
          const double s = integral.sum(t, b);
          const double var = integral.sum_sq(t, b) - s * s / n;
          if (!(var > 1e-20)) continue;
          double num = 0.0;
          const float* base = tdata + g.index(t[0], t[1], t[2]);
          for (int z = 0, k = 0; z < b; ++z)
            for (int y = 0; y < b; ++y) {
              const float* row = base + z * sz + y * sy;
              for (int x = 0; x < b; ++x, ++k) num += centred[k] * row[x];
            }
          const double score = num / std::sqrt(norm2 * var);
          const int k = ((dz + r) * side + (dy + r)) * side + (dx + r);
          if (score > best) {
            best = score;
            best_k = k;
          }
        }
    if (best_k < 0) continue;

    const int bx = best_k % side, by = (best_k / side) % side, bz = best_k / (side * side);
    const Index3 hit{c[0] + bx - r, c[1] + by - r, c[2] + bz - r};
    const Vec3 offset = Vec3(bx - r, by - r, bz - r) + subvoxel_offset(target, hit, b, centred, norm2);
    const Vec3 centre = block_center(g, c, b);
    out.push_back({centre, centre + offset.cwiseProduct(g.spacing), best, MatchDirection::forward});
  }
  return out;
}

std::vector<BlockCorrespondence> match_blocks(const Volume3& ref, const Volume3& flt,
                                              std::span<const Index3> ref_blocks,
                                              std::span<const Index3> flt_blocks,
                                              const AffineRegConfig& cfg,
                                              std::span<const std::uint8_t> flt_valid) {
  auto out = match_blocks_one_way(ref, flt, ref_blocks, cfg, flt_valid);
  auto back = match_blocks_one_way(flt, ref, flt_blocks, cfg);
  for (auto& m : back) {
    std::swap(m.ref_center, m.matched_center);
    m.direction = MatchDirection::backward;
    out.push_back(m);
  }
  if (out.empty()) throw DegenerateError("match_blocks: no block could be matched");
  return out;
}

AffineTransform fit_affine(std::span<const BlockCorrespondence> corr) {
  const auto n = static_cast<Eigen::Index>(corr.size());
  if (n < 4) throw DegenerateError("affine fit: fewer than 4 correspondences");
  Vec3 mp = Vec3::Zero(), mq = Vec3::Zero();
  for (const auto& c : corr) {
    mp += c.ref_center;
    mq += c.matched_center;
  }
  mp /= static_cast<double>(n);
  mq /= static_cast<double>(n);
  Eigen::MatrixXd P(n, 3), Q(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    P.row(i) = (corr[i].ref_center - mp).transpose();
    Q.row(i) = (corr[i].matched_center - mq).transpose();
  }
  const Mat3 cov = P.transpose() * P;
  const Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
  const Vec3 ev = eig.eigenvalues();
  if (!(ev[2] > 0.0) || ev[0] <= 1e-9 * ev[2])
    throw DegenerateError("affine fit: correspondences are coplanar or degenerate");
  // Q = P L^T on centred coordinates.
  const Mat3 lt = cov.ldlt().solve(P.transpose() * Q);
  const Mat3 lin = lt.transpose();
  return AffineTransform(lin, mq - lin * mp);
}

AffineTransform lts_fit_affine(std::span<const BlockCorrespondence> corr, double trim) {
  if (!(trim >= 0.0 && trim < 0.5)) throw ConfigError("lts: trim fraction must lie in [0, 0.5)");
  const std::size_t n = corr.size();
  const std::size_t keep = n - static_cast<std::size_t>(std::floor(trim * static_cast<double>(n)));
  if (keep < 4) throw DegenerateError("lts: insufficient correspondences");

  std::vector<BlockCorrespondence> retained(corr.begin(), corr.end());
  AffineTransform fit = fit_affine(retained);
  if (keep == n) return fit;

  std::vector<std::size_t> chosen, previous;
  std::vector<std::pair<double, std::size_t>> residuals(n);
  constexpr int kMaxSteps = 50;
  for (int step = 0; step < kMaxSteps; ++step) {
    for (std::size_t i = 0; i < n; ++i)
      residuals[i] = {(fit.apply(corr[i].ref_center) - corr[i].matched_center).squaredNorm(), i};
    std::sort(residuals.begin(), residuals.end());
    chosen.resize(keep);
    for (std::size_t i = 0; i < keep; ++i) chosen[i] = residuals[i].second;
    std::sort(chosen.begin(), chosen.end());
    if (chosen == previous) break;
    retained.clear();
    for (std::size_t i : chosen) retained.push_back(corr[i]);
    fit = fit_affine(retained);
    previous = chosen;
  }
  return fit;
}

AffineTransform affine_register(const Volume3& ref, const Volume3& flt, const Mask3* mask,
                                const AffineRegConfig& cfg,
                                const std::optional<AffineTransform>& init) {
  cfg.validate();
  require_same_grid(ref.geometry(), flt.geometry(), "affine_register");
  if (mask) {
    require_same_grid(ref.geometry(), mask->geometry(), "affine_register");
    if (mask->empty()) throw DegenerateError("affine_register: empty mask");
  }
  const int levels = feasible_levels(ref.geometry(), cfg.levels, 3 * cfg.block_size);
  const auto ref_pyr = build_pyramid(ref, levels, 3 * cfg.block_size);
  const auto flt_pyr = build_pyramid(flt, levels, 3 * cfg.block_size);
  std::vector<Mask3> mask_pyr;
  if (mask) mask_pyr = build_mask_pyramid(*mask, levels);

  AffineTransform t = init.value_or(AffineTransform::identity());
  for (int level = levels - 1; level >= 0; --level) {
    const Volume3& r = ref_pyr[level];
    const Volume3& f = flt_pyr[level];
    const Mask3* m = (mask && !mask_pyr[level].empty()) ? &mask_pyr[level] : nullptr;
    const Geometry& g = r.geometry();
    Vec3 lo = g.origin, hi = g.origin + g.extent();
    if (m) {
      const auto box = m->bounding_box();
      lo = g.to_physical(box->first[0], box->first[1], box->first[2]);
      hi = g.to_physical(box->second[0], box->second[1], box->second[2]);
    }
    const bool finest = level == 0;
    try {
      const auto ref_blocks = select_blocks_impl(r, m, {}, cfg);
      AffineTransform accepted = t;
      double accepted_score = -std::numeric_limits<double>::infinity();
      for (int it = 0; it <= cfg.max_outer_iterations; ++it) {
        const auto [warped, valid] = warp_with_validity(f, t);
        const double score = masked_ncc(r, warped, valid, m);
        if (!(score >= accepted_score)) {
          spdlog::debug("affine level {} iteration {}: ncc {:.4f} < {:.4f}, update rejected", level,
                        it, score, accepted_score);
          t = accepted;
          break;
        }
        accepted = t;
        accepted_score = score;
        if (it == cfg.max_outer_iterations) break;
        const auto flt_blocks = select_blocks_impl(warped, m, valid, cfg);
        const auto corr = match_blocks(r, warped, ref_blocks, flt_blocks, cfg, valid);
        const AffineTransform update = corr.size() < kMinAffineMatches
                                           ? trimmed_translation(corr, cfg.lts_trim_fraction)
                                           : lts_fit_affine(corr, cfg.lts_trim_fraction);
        t = t * update;
        const double moved = update_norm(update, lo, hi, g.spacing);
        spdlog::debug("affine level {} iteration {}: {} matches, ncc {:.4f}, update {:.4g} voxels",
                      level, it, corr.size(), score, moved);
        if (moved < cfg.convergence_tol) break;
      }
    } catch (const DegenerateError&) {
      if (finest) throw;
    }
  }
  if (!t.matrix().allFinite()) throw DegenerateError("affine_register: non-finite transform");
  return t;
}

}  // namespace dceus
