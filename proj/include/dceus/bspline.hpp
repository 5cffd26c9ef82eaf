#pragma once

#include <array>
#include <vector>

#include "dceus/affine.hpp"
#include "dceus/resample.hpp"
#include "dceus/volume.hpp"

namespace dceus {

/// Cubic B-spline control lattice over a reference image grid.
///
/// Control point j along an axis sits at origin + (j - 1) * spacing, so the
/// lattice carries one knot of margin before the first voxel and enough after
/// the last. Displacements are in mm. The full mapping of a reference point x
/// is init(x) + u(x), where u is the spline expansion of the displacements.
struct BSplineGrid {
  Geometry reference;
  Vec3 control_spacing{5.0, 5.0, 5.0};  ///< mm
  Index3 control_dims{4, 4, 4};
  std::array<std::vector<double>, 3> coefficients;  ///< per component, x fastest
  AffineTransform init;

  /// Zero-displacement lattice covering `reference` at `spacing_mm`.
  static BSplineGrid create(const Geometry& reference, const Vec3& spacing_mm,
                            const AffineTransform& init = AffineTransform::identity());

  std::size_t control_count() const {
    return static_cast<std::size_t>(control_dims[0]) * control_dims[1] * control_dims[2];
  }
  std::size_t control_index(int i, int j, int k) const {
    return (static_cast<std::size_t>(k) * control_dims[1] + j) * control_dims[0] + i;
  }
  Vec3 control_position(int i, int j, int k) const;
  Vec3 displacement(std::size_t control) const {
    return Vec3(coefficients[0][control], coefficients[1][control], coefficients[2][control]);
  }
  void set_displacement(std::size_t control, const Vec3& d) {
    for (int c = 0; c < 3; ++c) coefficients[c][control] = d[c];
  }

  /// Direct 4x4x4 expansion at a physical point inside the reference extent.
  Vec3 displacement_at(const Vec3& mm) const;

  /// Same field on a lattice of half the spacing (exact dyadic subdivision).
  BSplineGrid refined() const;

  bool all_finite() const;
  double max_abs_coefficient() const;
};

/// u(x) at every reference voxel.
DenseDisplacementField evaluate_field(const BSplineGrid& grid);

/// Total pull-back displacement init(x) + u(x) - x at every reference voxel.
DenseDisplacementField deformation_field(const BSplineGrid& grid);

/// Mean over the reference extent of the thin-plate energy
/// sum_c (u_c,xx^2 + u_c,yy^2 + u_c,zz^2 + 2 u_c,xy^2 + 2 u_c,xz^2 + 2 u_c,yz^2),
/// integrated exactly from the control points.
double bending_energy(const BSplineGrid& grid);

/// Gradient of bending_energy with respect to every coefficient.
std::array<std::vector<double>, 3> bending_energy_gradient(const BSplineGrid& grid);

/// Mean of (log det(I + grad u))^2 over the reference voxel centres; +infinity
/// if any determinant is <= 0.
double log_jacobian_penalty(const BSplineGrid& grid);

/// Smallest det(I + grad u) over the reference voxel centres.
double min_jacobian_determinant(const BSplineGrid& grid);

namespace detail {

/// Spline taps for samples along one axis.
struct AxisBasis {
  std::vector<int> first;  ///< control index of the first tap
  std::vector<std::array<double, 4>> value;
  std::vector<std::array<double, 4>> slope;  ///< d/dx in 1/mm
};

/// Samples at offset_mm + i * step_mm (relative to the lattice origin), i < count.
AxisBasis make_axis_basis(int count, double offset_mm, double step_mm, double spacing_mm,
                          int control_count);

/// Value and first derivatives of one coefficient field on the tensor sample
/// box described by the three axis bases. Any output pointer may be null.
void evaluate_separable(const std::vector<double>& coeff, const Index3& control_dims,
                        const AxisBasis& bx, const AxisBasis& by, const AxisBasis& bz,
                        double* value, double* dx, double* dy, double* dz);

/// Adjoint of evaluate_separable: accumulates
/// sum_samples (gv * B + gx * dB/dx + gy * dB/dy + gz * dB/dz) into `grad`.
void accumulate_separable(std::vector<double>& grad, const Index3& control_dims,
                          const AxisBasis& bx, const AxisBasis& by, const AxisBasis& bz,
                          const double* gv, const double* gx, const double* gy, const double* gz);

/// Banded Gram matrices of the bending-energy quadratic form for one lattice.
class BendingEnergyForm {
 public:
  explicit BendingEnergyForm(const BSplineGrid& grid);
  /// Energy and, when `gradient` is non-null, its gradient.
  double evaluate(const std::array<std::vector<double>, 3>& coeff,
                  std::array<std::vector<double>, 3>* gradient) const;

 private:
  struct Band {
    int n = 0;
    std::vector<std::array<double, 7>> rows;  ///< G(j, j + d - 3)
  };
  void apply(const std::vector<double>& c, const Band& gx, const Band& gy, const Band& gz,
             std::vector<double>& out) const;

  Index3 dims_;
  std::array<std::array<Band, 3>, 3> bands_;  ///< bands_[axis][order]: G^{00}, G^{11}, G^{22}
  double inv_volume_ = 1.0;
};

}  // namespace detail

}  // namespace dceus
