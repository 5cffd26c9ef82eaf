#include "dceus/resample.hpp"

#include <algorithm>
#include <cmath>

#include "dceus/bspline_basis.hpp"

namespace dceus {

namespace {

constexpr double kInsideTolerance = 1e-6;

inline int mirror(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * n - 2;
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

}  // namespace

bool DenseDisplacementField::all_finite() const {
  return std::all_of(components.begin(), components.end(),
                     [](float v) { return std::isfinite(v); });
}

double DenseDisplacementField::max_norm() const {
  double best = 0.0;
  for (std::size_t i = 0; i < geometry.voxel_count(); ++i) best = std::max(best, at(i).norm());
  return best;
}

double DenseDisplacementField::mean_norm() const {
  const std::size_t n = geometry.voxel_count();
  if (n == 0) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += at(i).norm();
  return sum / static_cast<double>(n);
}

void bspline_prefilter_line(std::span<double> c) {
  const std::size_t n = c.size();
  if (n < 2) return;
  const double z = std::sqrt(3.0) - 2.0;
  const double gain = (1.0 - z) * (1.0 - 1.0 / z);
  for (double& v : c) v *= gain;

  // Causal initialisation, exact for the mirror-symmetric extension.
  double zn = z;
  const double iz = 1.0 / z;
  double z2n = std::pow(z, static_cast<double>(n - 1));
  double sum = c[0] + z2n * c[n - 1];
  z2n *= z2n * iz;
  for (std::size_t k = 1; k + 1 < n; ++k) {
    sum += (zn + z2n) * c[k];
    zn *= z;
    z2n *= iz;
  }
  c[0] = sum / (1.0 - zn * zn);
  for (std::size_t k = 1; k < n; ++k) c[k] += z * c[k - 1];

  c[n - 1] = (z / (z * z - 1.0)) * (z * c[n - 2] + c[n - 1]);
  for (std::size_t k = n - 1; k-- > 0;) c[k] = z * (c[k + 1] - c[k]);
}

ImageSampler::ImageSampler(const Volume3& volume, Interpolation mode)
    : geometry_(volume.geometry()), mode_(mode), values_(volume.data().data()) {
  if (mode_ != Interpolation::cubic) return;
  const auto& d = geometry_.dims;
  std::vector<double> work(volume.data().begin(), volume.data().end());
  std::vector<double> line;
  for (int axis = 0; axis < 3; ++axis) {
    const int n = d[axis];
    if (n < 2) continue;
    line.resize(n);
    const std::size_t stride = axis == 0 ? 1 : axis == 1 ? d[0] : static_cast<std::size_t>(d[0]) * d[1];
    const int o1 = axis == 0 ? d[1] : d[0];
    const int o2 = axis == 2 ? d[1] : d[2];
    for (int b = 0; b < o2; ++b) {
      for (int a = 0; a < o1; ++a) {
        std::size_t base;
        if (axis == 0) base = geometry_.index(0, a, b);
        else if (axis == 1) base = geometry_.index(a, 0, b);
        else base = geometry_.index(a, b, 0);
        for (int k = 0; k < n; ++k) line[k] = work[base + k * stride];
        bspline_prefilter_line(line);
        for (int k = 0; k < n; ++k) work[base + k * stride] = line[k];
      }
    }
  }
  coefficients_.assign(work.begin(), work.end());
  values_ = coefficients_.data();
}

bool ImageSampler::inside(const Vec3& v) const {
  for (int a = 0; a < 3; ++a) {
    if (!(v[a] >= -kInsideTolerance) || !(v[a] <= geometry_.dims[a] - 1 + kInsideTolerance))
      return false;
  }
  return true;
}

double ImageSampler::value(const Vec3& voxel) const {
  switch (mode_) {
    case Interpolation::nearest: {
      int i[3];
      for (int a = 0; a < 3; ++a)
        i[a] = std::clamp(static_cast<int>(std::lround(voxel[a])), 0, geometry_.dims[a] - 1);
      return values_[geometry_.index(i[0], i[1], i[2])];
    }
    case Interpolation::linear:
      return linear(voxel, nullptr);
    case Interpolation::cubic:
      return cubic(voxel, nullptr);
  }
  return 0.0;
}

double ImageSampler::value_and_gradient(const Vec3& voxel, Vec3& gradient) const {
  switch (mode_) {
    case Interpolation::nearest:
      gradient.setZero();
      return value(voxel);
    case Interpolation::linear:
      return linear(voxel, &gradient);
    case Interpolation::cubic:
      return cubic(voxel, &gradient);
  }
  return 0.0;
}

double ImageSampler::linear(const Vec3& v, Vec3* gradient) const {
  int i0[3];
  double f[3];
  int step[3];
  for (int a = 0; a < 3; ++a) {
    const int n = geometry_.dims[a];
    if (n == 1) {
      i0[a] = 0;
      f[a] = 0.0;
      step[a] = 0;
      continue;
    }
    const double c = std::clamp(v[a], 0.0, static_cast<double>(n - 1));
    int i = static_cast<int>(std::floor(c));
    if (i >= n - 1) i = n - 2;
    i0[a] = i;
    f[a] = c - i;
    step[a] = 1;
  }
  const std::size_t sx = step[0];
  const std::size_t sy = step[1] * static_cast<std::size_t>(geometry_.dims[0]);
  const std::size_t sz = step[2] * static_cast<std::size_t>(geometry_.dims[0]) * geometry_.dims[1];
  const float* p = values_ + geometry_.index(i0[0], i0[1], i0[2]);
  const double c000 = p[0], c100 = p[sx], c010 = p[sy], c110 = p[sx + sy];
  const double c001 = p[sz], c101 = p[sx + sz], c011 = p[sy + sz], c111 = p[sx + sy + sz];
  const double fx = f[0], fy = f[1], fz = f[2];
  const double c00 = c000 + fx * (c100 - c000);
  const double c10 = c010 + fx * (c110 - c010);
  const double c01 = c001 + fx * (c101 - c001);
  const double c11 = c011 + fx * (c111 - c011);
  const double c0 = c00 + fy * (c10 - c00);
  const double c1 = c01 + fy * (c11 - c01);
  if (gradient) {
    const double dx0 = (c100 - c000) + fy * ((c110 - c010) - (c100 - c000));
    const double dx1 = (c101 - c001) + fy * ((c111 - c011) - (c101 - c001));
    (*gradient)[0] = step[0] ? dx0 + fz * (dx1 - dx0) : 0.0;
    (*gradient)[1] = step[1] ? (c10 - c00) + fz * ((c11 - c01) - (c10 - c00)) : 0.0;
    (*gradient)[2] = step[2] ? c1 - c0 : 0.0;
  }
  return c0 + fz * (c1 - c0);
}

double ImageSampler::cubic(const Vec3& v, Vec3* gradient) const {
  int base[3];
  std::array<double, 4> w[3];
  std::array<double, 4> dw[3];
  for (int a = 0; a < 3; ++a) {
    const double fl = std::floor(v[a]);
    base[a] = static_cast<int>(fl) - 1;
    w[a] = cubic_weights(v[a] - fl);
    dw[a] = cubic_first_derivatives(v[a] - fl);
  }
  int ix[4], iy[4], iz[4];
  for (int k = 0; k < 4; ++k) {
    ix[k] = mirror(base[0] + k, geometry_.dims[0]);
    iy[k] = mirror(base[1] + k, geometry_.dims[1]);
    iz[k] = mirror(base[2] + k, geometry_.dims[2]);
  }
  double value = 0.0, gx = 0.0, gy = 0.0, gz = 0.0;
  for (int c = 0; c < 4; ++c) {
    double vz = 0.0, vzx = 0.0, vzy = 0.0;
    for (int b = 0; b < 4; ++b) {
      const float* row = values_ + geometry_.index(0, iy[b], iz[c]);
      double s = 0.0, sd = 0.0;
      for (int a = 0; a < 4; ++a) {
        s += w[0][a] * row[ix[a]];
        sd += dw[0][a] * row[ix[a]];
      }
      vz += w[1][b] * s;
      vzx += w[1][b] * sd;
      vzy += dw[1][b] * s;
    }
    value += w[2][c] * vz;
    gx += w[2][c] * vzx;
    gy += w[2][c] * vzy;
    gz += dw[2][c] * vz;
  }
  if (gradient) {
    *gradient = Vec3(geometry_.dims[0] > 1 ? gx : 0.0, geometry_.dims[1] > 1 ? gy : 0.0,
                     geometry_.dims[2] > 1 ? gz : 0.0);
  }
  return value;
}

Volume3 resample(const Volume3& volume, const SpatialMapping& mapping) {
  if (!std::isfinite(mapping.padding)) throw ConfigError("resample: non-finite padding");
  const Geometry& g = volume.geometry();
  const ImageSampler sampler(volume, mapping.interpolation);
  std::vector<float> out(g.voxel_count(), mapping.padding);

  if (const auto* affine = std::get_if<AffineTransform>(&mapping.transform)) {
    if (!affine->matrix().allFinite()) throw DegenerateError("resample: non-finite transform");
    // Compose voxel->mm, the affine, and mm->voxel into one map on indices.
    const Mat3 to_mm = g.spacing.asDiagonal();
    const Mat3 from_mm = g.spacing.cwiseInverse().asDiagonal();
    const Mat3 lin = from_mm * affine->linear() * to_mm;
    const Vec3 off = from_mm * (affine->linear() * g.origin + affine->offset() - g.origin);
    for (int z = 0; z < g.dims[2]; ++z)
      for (int y = 0; y < g.dims[1]; ++y) {
        const Vec3 row = lin * Vec3(0.0, y, z) + off;
        for (int x = 0; x < g.dims[0]; ++x) {
          const Vec3 v = row + lin.col(0) * x;
          if (sampler.inside(v)) out[g.index(x, y, z)] = static_cast<float>(sampler.value(v));
        }
      }
  } else {
    const auto& field = std::get<DenseDisplacementField>(mapping.transform);
    require_same_grid(g, field.geometry, "resample");
    if (!field.all_finite()) throw DegenerateError("resample: non-finite displacement field");
    for (int z = 0; z < g.dims[2]; ++z)
      for (int y = 0; y < g.dims[1]; ++y)
        for (int x = 0; x < g.dims[0]; ++x) {
          const std::size_t i = g.index(x, y, z);
          const Vec3 v(x + field.components[3 * i] / g.spacing[0],
                       y + field.components[3 * i + 1] / g.spacing[1],
                       z + field.components[3 * i + 2] / g.spacing[2]);
          if (sampler.inside(v)) out[i] = static_cast<float>(sampler.value(v));
        }
  }
  return Volume3(g, std::move(out));
}

Mask3 resample_mask(const Mask3& mask,
                    const std::variant<AffineTransform, DenseDisplacementField>& transform) {
  std::vector<float> indicator(mask.size());
  for (std::size_t i = 0; i < indicator.size(); ++i) indicator[i] = mask[i] ? 1.0f : 0.0f;
  const Volume3 warped = resample(Volume3(mask.geometry(), std::move(indicator)),
                                  SpatialMapping{transform, Interpolation::linear, 0.0f});
  return threshold_mask(warped, 0.5f - 1e-6f);
}

}  // namespace dceus
