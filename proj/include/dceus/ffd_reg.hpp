#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "dceus/affine.hpp"
#include "dceus/bspline.hpp"
#include "dceus/resample.hpp"
#include "dceus/similarity.hpp"
#include "dceus/volume.hpp"

namespace dceus {

struct FfdConfig {
  int bins = 64;
  double control_spacing_voxels = 5.0;  ///< at full resolution
  double bending_weight = 0.3;
  double log_jacobian_weight = 0.1;
  int levels = 3;
  int max_iterations_per_level = 300;
  double initial_step_voxels = 0.5;  ///< first line-search step, level voxels
  double min_step_voxels = 0.01;     ///< line search gives up below this
  double objective_tolerance = 5e-5; ///< relative gain counted as a stall
  int stall_iterations = 3;
  Interpolation interpolation = Interpolation::linear;
  double range_padding = 0.05;  ///< floating histogram range margin, fraction of width

  double similarity_weight() const { return 1.0 - bending_weight - log_jacobian_weight; }
  /// Throws ConfigError on out-of-range fields.
  void validate() const;
};

struct FfdTerms {
  double nmi = 0.0;
  double bending = 0.0;
  double log_jacobian = 0.0;
  double total = 0.0;  ///< -infinity when the field folds
  std::size_t samples = 0;
};

using Coefficients = std::array<std::vector<double>, 3>;

/// Regularized NMI objective for one resolution level.
///
/// `ref`, `flt` and `mask` share one grid whose origin matches the lattice
/// reference. Similarity is sampled at mask voxels (all voxels without a
/// mask); the log-Jacobian term at every voxel of the mask bounding box.
class FfdObjective {
 public:
  FfdObjective(const Volume3& ref, const Volume3& flt, const Mask3* mask, const BSplineGrid& layout,
               const FfdConfig& cfg);

  /// Objective terms; fills `gradient` (d total / d coefficient) when non-null
  /// and the field does not fold.
  FfdTerms evaluate(const Coefficients& coeff, Coefficients* gradient = nullptr) const;

 private:
  struct Box {
    Index3 lo{0, 0, 0};
    Index3 size{0, 0, 0};
    detail::AxisBasis basis[3];
    std::size_t count() const { return static_cast<std::size_t>(size[0]) * size[1] * size[2]; }
  };
  Box make_box(Index3 lo, Index3 hi) const;

  const Volume3& flt_;
  FfdConfig cfg_;
  BSplineGrid layout_;
  Geometry geometry_;
  ImageSampler sampler_;
  detail::BendingEnergyForm bending_;
  Box sim_box_;
  std::vector<double> ref_values_;
  std::vector<std::uint8_t> base_valid_;
  std::vector<Vec3> init_points_;  ///< affine image of each similarity sample, mm
  IntensityRange ref_range_;
  IntensityRange flt_range_;
};

struct FfdResult {
  BSplineGrid grid;
  bool converged = true;
  /// Objective after every accepted step, one list per level, coarse first.
  std::vector<std::vector<double>> objective_trace;
  std::vector<std::string> warnings;
  int iterations = 0;
};

/// Coarse-to-fine free-form registration. The returned lattice maps reference
/// points x to init(x) + u(x) in the floating image.
FfdResult ffd_register(const Volume3& ref, const Volume3& flt,
                       const std::optional<AffineTransform>& init, const Mask3* mask,
                       const FfdConfig& cfg);

}  // namespace dceus
