#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "dceus/affine.hpp"
#include "dceus/evaluation.hpp"
#include "dceus/volume.hpp"

namespace dceus {

struct Kinetics {
  double t0 = 5.0;
  double mu = 3.0;
  double sigma = 0.5;
  double scale = 100.0;
  double offset = 0.02;
  LognormalParams params() const { return {t0, mu, sigma, scale, offset}; }
};

struct PhantomSpec {
  Index3 dims{96, 96, 64};
  Vec3 spacing{1.0, 1.0, 1.0};
  Vec3 lesion_center{47.5, 47.5, 31.5};  ///< mm
  Vec3 lesion_radii{14.0, 12.0, 10.0};   ///< mm
  double texture_sigma_voxels = 1.5;
  double texture_amplitude = 0.6;
  Kinetics lesion{5.0, 3.0, 0.5, 100.0, 0.02};
  Kinetics background{7.0, 3.3, 0.7, 25.0, 0.02};
  double speckle_sigma = 0.15;
  double additive_sigma = 0.002;
  double frame_rate = 1.0;  ///< Hz
  double duration = 60.0;   ///< s
  std::uint64_t seed = 7;

  std::size_t frame_count() const;
  Geometry geometry() const;
  /// Throws ConfigError on invalid fields.
  void validate() const;
};

struct MotionSpec {
  double amplitude_voxels = 4.0;
  double period_s = 4.0;
  double phase = 0.0;       ///< radians
  Vec3 axis{0.0, 1.0, 0.0}; ///< sinusoid direction (normalized on use)
  double drift_voxels = 2.0;  ///< over the whole acquisition
  Vec3 drift_axis{1.0, 0.0, 0.0};
  double step_voxels = 3.0;
  int step_frame = 40;  ///< negative disables the step
  Vec3 step_axis{1.0, 0.0, 0.0};

  static MotionSpec none();
};

/// Per-frame ground truth. `displacements` is the object motion in mm;
/// `transforms` the matching pull-back maps (frame grid -> motion-free grid).
struct MotionTrajectory {
  std::vector<Vec3> displacements;
  std::vector<AffineTransform> transforms;
  std::size_t size() const { return transforms.size(); }
};

MotionTrajectory make_trajectory(const PhantomSpec& spec, const MotionSpec& motion);

struct PhantomCine {
  Cine4 cine;
  std::vector<Mask3> lesion_masks;  ///< per frame
  MotionTrajectory trajectory;
};

/// Static tissue texture, mean about 1, never negative.
Volume3 phantom_texture(const PhantomSpec& spec);

/// Lesion ellipsoid in the motion-free frame, grown by `margin_mm`.
Mask3 lesion_mask(const PhantomSpec& spec, double margin_mm = 0.0);

/// Synthesizes the motion-free cine (kinetics x texture x noise) and resamples
/// each frame through its trajectory transform. Deterministic per seed.
PhantomCine generate_phantom_cine(const PhantomSpec& spec, const MotionTrajectory& trajectory,
                                  int jobs = 1);

/// Noise- and motion-free mean over `roi` of the model intensity, divided by
/// `display_max`.
TimeIntensityCurve expected_tic(const PhantomSpec& spec, const Mask3& roi, double display_max = 1.0);

/// Standard normal draws (Box-Muller over std::mt19937_64), identical on
/// every platform unlike std::normal_distribution.
class NormalStream {
 public:
  explicit NormalStream(std::uint64_t seed);
  double next();

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
  double next_unit();
};

}  // namespace dceus
