#pragma once

#include <iosfwd>
#include <string>

#include <Eigen/Core>

#include "dceus/volume.hpp"

namespace dceus {

using Mat3 = Eigen::Matrix3d;
using Mat34 = Eigen::Matrix<double, 3, 4>;

/// 12-parameter affine map on physical (mm) coordinates: y = L x + t.
///
/// Registration results follow the pull-back convention: the transform maps a
/// point of the reference grid to the floating-image point whose intensity is
/// sampled there.
class AffineTransform {
 public:
  AffineTransform() : matrix_(Mat34::Zero()) { matrix_.leftCols<3>().setIdentity(); }
  /// Throws DegenerateError for non-finite entries or |det L| <= 1e-9.
  explicit AffineTransform(const Mat34& matrix);
  AffineTransform(const Mat3& linear, const Vec3& translation);

  static AffineTransform identity() { return {}; }
  static AffineTransform translation(const Vec3& offset);
  /// y = c + L (x - c) + offset.
  static AffineTransform about_center(const Mat3& linear, const Vec3& center, const Vec3& offset);

  const Mat34& matrix() const { return matrix_; }
  Mat3 linear() const { return matrix_.leftCols<3>(); }
  Vec3 offset() const { return matrix_.col(3); }

  Vec3 apply(const Vec3& x) const { return matrix_.leftCols<3>() * x + matrix_.col(3); }
  AffineTransform inverse() const;

  /// (a * b)(x) = a(b(x)).
  friend AffineTransform operator*(const AffineTransform& a, const AffineTransform& b);

  /// Largest absolute entry difference.
  double max_abs_difference(const AffineTransform& other) const;

 private:
  Mat34 matrix_;
};

/// Plain-text form: a tag line followed by three rows of four numbers.
void write_affine(std::ostream& out, const AffineTransform& transform);
AffineTransform read_affine(std::istream& in);
void save_affine(const std::string& path, const AffineTransform& transform);
AffineTransform load_affine(const std::string& path);

inline constexpr const char* kAffineFileTag = "# dceus-affine v1 mm pull-back 3x4 row-major";

}  // namespace dceus
