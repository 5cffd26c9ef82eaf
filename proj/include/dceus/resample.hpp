#pragma once

#include <variant>
#include <vector>

#include "dceus/affine.hpp"
#include "dceus/volume.hpp"

namespace dceus {

enum class Interpolation { nearest, linear, cubic };

/// Per-voxel displacement (mm) on a fixed grid; the mapping is x -> x + d(x).
struct DenseDisplacementField {
  Geometry geometry;
  std::vector<float> components;  ///< interleaved (dx, dy, dz) per voxel, x fastest

  DenseDisplacementField() = default;
  explicit DenseDisplacementField(const Geometry& g)
      : geometry(g), components(3 * g.voxel_count(), 0.0f) {}

  Vec3 at(std::size_t voxel) const {
    return Vec3(components[3 * voxel], components[3 * voxel + 1], components[3 * voxel + 2]);
  }
  void set(std::size_t voxel, const Vec3& d) {
    for (int a = 0; a < 3; ++a) components[3 * voxel + a] = static_cast<float>(d[a]);
  }
  bool all_finite() const;
  /// Largest displacement norm, in mm.
  double max_norm() const;
  double mean_norm() const;
};

/// Pull-back mapping applied by `resample`.
struct SpatialMapping {
  std::variant<AffineTransform, DenseDisplacementField> transform = AffineTransform::identity();
  Interpolation interpolation = Interpolation::linear;
  float padding = 0.0f;
};

/// Point sampler over a volume in continuous voxel coordinates. Cubic mode
/// holds B-spline coefficients computed with mirror boundaries.
class ImageSampler {
 public:
  ImageSampler(const Volume3& volume, Interpolation mode);

  const Geometry& geometry() const { return geometry_; }

  /// True when `voxel` lies within [0, dim - 1] on every axis.
  bool inside(const Vec3& voxel) const;

  /// Interpolated value; `voxel` must be inside.
  double value(const Vec3& voxel) const;

  /// Interpolated value and its gradient with respect to the voxel coordinate.
  /// Nearest mode reports a zero gradient.
  double value_and_gradient(const Vec3& voxel, Vec3& gradient) const;

 private:
  double linear(const Vec3& v, Vec3* gradient) const;
  double cubic(const Vec3& v, Vec3* gradient) const;

  Geometry geometry_;
  Interpolation mode_;
  const float* values_ = nullptr;
  std::vector<float> coefficients_;
};

/// Output voxel x takes the input value at mapping(x); output geometry equals
/// the input geometry, samples outside the input take `padding`.
Volume3 resample(const Volume3& volume, const SpatialMapping& mapping);

/// Warps a mask by linear interpolation of its indicator, keeping voxels >= 0.5.
Mask3 resample_mask(const Mask3& mask, const std::variant<AffineTransform, DenseDisplacementField>& transform);

/// In-place cubic B-spline prefilter of one line of samples (mirror boundary).
void bspline_prefilter_line(std::span<double> line);

}  // namespace dceus
