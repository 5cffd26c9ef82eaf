#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "dceus/errors.hpp"

namespace dceus {

using Vec3 = Eigen::Vector3d;
using Index3 = std::array<int, 3>;

/// Regular voxel grid. Voxel (i, j, k) sits at origin + spacing ⊙ (i, j, k) in
/// millimetres; orientation beyond axis-aligned spacing is not modelled here.
/// Voxel data is stored with x fastest, then y, then z.
struct Geometry {
  Index3 dims{1, 1, 1};
  Vec3 spacing{1.0, 1.0, 1.0};
  Vec3 origin{0.0, 0.0, 0.0};

  std::size_t voxel_count() const {
    return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  }
  std::size_t index(int x, int y, int z) const {
    return (static_cast<std::size_t>(z) * dims[1] + y) * dims[0] + x;
  }
  Index3 coords(std::size_t linear) const;

  Vec3 to_physical(const Vec3& voxel) const { return origin + spacing.cwiseProduct(voxel); }
  Vec3 to_physical(int x, int y, int z) const { return to_physical(Vec3(x, y, z)); }
  Vec3 to_voxel(const Vec3& mm) const { return (mm - origin).cwiseQuotient(spacing); }

  /// Physical extent covered by voxel centres, (dims - 1) * spacing.
  Vec3 extent() const;

  /// Throws ConfigError unless dims >= 1 and spacing > 0 on every axis.
  void validate() const;

  bool same_grid(const Geometry& other, double tol = 1e-6) const;
  bool operator==(const Geometry& other) const = default;
};

/// Throws GeometryError when `a` and `b` are not the same grid.
void require_same_grid(const Geometry& a, const Geometry& b, const char* what);

/// Scalar 3D image with 32-bit float intensities.
class Volume3 {
 public:
  Volume3() = default;
  explicit Volume3(const Geometry& geometry, float fill = 0.0f);
  /// Validates data length and finiteness.
  Volume3(const Geometry& geometry, std::vector<float> data);

  const Geometry& geometry() const { return geometry_; }
  const Index3& dims() const { return geometry_.dims; }
  std::size_t size() const { return data_.size(); }

  float operator()(int x, int y, int z) const { return data_[geometry_.index(x, y, z)]; }
  float& operator()(int x, int y, int z) { return data_[geometry_.index(x, y, z)]; }
  float operator[](std::size_t i) const { return data_[i]; }
  float& operator[](std::size_t i) { return data_[i]; }

  std::span<const float> data() const { return data_; }
  std::span<float> data() { return data_; }

  bool all_finite() const;
  bool operator==(const Volume3& other) const = default;

 private:
  Geometry geometry_;
  std::vector<float> data_;
};

/// Binary voxel mask.
class Mask3 {
 public:
  Mask3() = default;
  explicit Mask3(const Geometry& geometry, bool fill = false);
  Mask3(const Geometry& geometry, std::vector<std::uint8_t> data);

  const Geometry& geometry() const { return geometry_; }
  const Index3& dims() const { return geometry_.dims; }
  std::size_t size() const { return data_.size(); }

  bool operator()(int x, int y, int z) const { return data_[geometry_.index(x, y, z)] != 0; }
  bool operator[](std::size_t i) const { return data_[i] != 0; }
  void set(std::size_t i, bool value) { data_[i] = value ? 1 : 0; }
  void set(int x, int y, int z, bool value) { set(geometry_.index(x, y, z), value); }

  std::span<const std::uint8_t> data() const { return data_; }

  std::size_t count() const;
  bool empty() const { return count() == 0; }

  /// Inclusive voxel bounding box of the true voxels; nullopt when empty.
  std::optional<std::pair<Index3, Index3>> bounding_box() const;

  bool operator==(const Mask3& other) const = default;

 private:
  Geometry geometry_;
  std::vector<std::uint8_t> data_;
};

/// Voxels with value > threshold become true.
Mask3 threshold_mask(const Volume3& volume, float threshold = 0.0f);

/// Time-ordered sequence of volumes sharing one grid.
class Cine4 {
 public:
  Cine4() = default;
  /// Validates N >= 2, shared geometry and strictly increasing times.
  Cine4(std::vector<Volume3> frames, std::vector<double> times,
        std::optional<double> frame_rate_hint = std::nullopt);

  /// Uniform timing t_n = n / frame_rate.
  static Cine4 uniform(std::vector<Volume3> frames, double frame_rate);

  std::size_t frame_count() const { return frames_.size(); }
  const Volume3& frame(std::size_t n) const { return frames_.at(n); }
  const std::vector<Volume3>& frames() const { return frames_; }
  const std::vector<double>& times() const { return times_; }
  std::optional<double> frame_rate_hint() const { return frame_rate_hint_; }
  const Geometry& geometry() const { return frames_.front().geometry(); }

  bool operator==(const Cine4& other) const = default;

 private:
  std::vector<Volume3> frames_;
  std::vector<double> times_;
  std::optional<double> frame_rate_hint_;
};

/// Voxel-wise (weighted) arithmetic mean; uniform weights when none given.
Volume3 average_frames(std::span<const Volume3> frames,
                       std::span<const double> weights = {});

/// Mean voxel intensity, restricted to `mask` when one is given.
double frame_mean_intensity(const Volume3& volume, const Mask3* mask = nullptr);

}  // namespace dceus
