#include "dceus/phantom.hpp"

#include <cmath>
#include <numbers>

#include "dceus/parallel.hpp"
#include "dceus/pyramid.hpp"
#include "dceus/resample.hpp"

namespace dceus {

std::size_t PhantomSpec::frame_count() const {
  return static_cast<std::size_t>(std::llround(duration * frame_rate));
}

Geometry PhantomSpec::geometry() const {
  Geometry g;
  g.dims = dims;
  g.spacing = spacing;
  return g;
}

void PhantomSpec::validate() const {
  geometry().validate();
  if (!(frame_rate > 0.0) || !(duration > 0.0)) throw ConfigError("phantom: frame_rate and duration must be positive");
  if (frame_count() < 2) throw ConfigError("phantom: need at least two frames");
  for (int a = 0; a < 3; ++a)
    if (!(lesion_radii[a] > 0.0)) throw ConfigError("phantom: lesion radii must be positive");
  for (const Kinetics* k : {&lesion, &background})
    if (!(k->sigma > 0.0) || !(k->scale >= 0.0) || !(k->offset >= 0.0))
      throw ConfigError("phantom: kinetics need sigma > 0, scale >= 0, offset >= 0");
  if (!(speckle_sigma >= 0.0) || !(additive_sigma >= 0.0) || !(texture_amplitude >= 0.0) ||
      !(texture_sigma_voxels >= 0.0))
    throw ConfigError("phantom: noise and texture parameters must be >= 0");
}

MotionSpec MotionSpec::none() {
  MotionSpec m;
  m.amplitude_voxels = 0.0;
  m.drift_voxels = 0.0;
  m.step_voxels = 0.0;
  m.step_frame = -1;
  return m;
}

MotionTrajectory make_trajectory(const PhantomSpec& spec, const MotionSpec& motion) {
  spec.validate();
  const std::size_t n = spec.frame_count();
  auto unit = [](const Vec3& v) {
    const double len = v.norm();
    if (!(len > 0.0)) throw ConfigError("motion: axis must be nonzero");
    return Vec3(v / len);
  };
  const Vec3 a = unit(motion.axis), d = unit(motion.drift_axis), s = unit(motion.step_axis);
  MotionTrajectory traj;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / spec.frame_rate;
    Vec3 v = motion.amplitude_voxels * std::sin(2.0 * std::numbers::pi * t / motion.period_s + motion.phase) * a;
    v += motion.drift_voxels * (static_cast<double>(i) / static_cast<double>(n - 1)) * d;
    if (motion.step_frame >= 0 && i >= static_cast<std::size_t>(motion.step_frame)) v += motion.step_voxels * s;
    const Vec3 mm = v.cwiseProduct(spec.spacing);
    traj.displacements.push_back(mm);
    traj.transforms.push_back(AffineTransform::translation(-mm));
  }
  return traj;
}

NormalStream::NormalStream(std::uint64_t seed) : engine_(seed) {}

double NormalStream::next_unit() {
  // 53 random bits in (0, 1).
  return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
}

double NormalStream::next() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double r = std::sqrt(-2.0 * std::log(next_unit()));
  const double theta = 2.0 * std::numbers::pi * next_unit();
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

namespace {

std::uint64_t mix(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

bool in_ellipsoid(const Vec3& p, const Vec3& c, const Vec3& r) {
  return (p - c).cwiseQuotient(r).squaredNorm() <= 1.0;
}

}  // namespace

Volume3 phantom_texture(const PhantomSpec& spec) {
  spec.validate();
  const Geometry g = spec.geometry();
  Volume3 noise(g);
  NormalStream rng(mix(spec.seed, 0));
  for (std::size_t i = 0; i < noise.size(); ++i) noise[i] = static_cast<float>(rng.next());
  Volume3 smooth = gaussian_smooth(noise, spec.texture_sigma_voxels);
  double mean = 0.0, sq = 0.0;
  for (float v : smooth.data()) {
    mean += v;
    sq += static_cast<double>(v) * v;
  }
  mean /= static_cast<double>(smooth.size());
  const double sd = std::sqrt(std::max(sq / static_cast<double>(smooth.size()) - mean * mean, 1e-30));
  for (std::size_t i = 0; i < smooth.size(); ++i)
    smooth[i] = static_cast<float>(std::max(0.0, 1.0 + spec.texture_amplitude * (smooth[i] - mean) / sd));
  return smooth;
}

Mask3 lesion_mask(const PhantomSpec& spec, double margin_mm) {
  const Geometry g = spec.geometry();
  Mask3 m(g);
  const Vec3 r = spec.lesion_radii + Vec3::Constant(margin_mm);
  for (int z = 0; z < g.dims[2]; ++z)
    for (int y = 0; y < g.dims[1]; ++y)
      for (int x = 0; x < g.dims[0]; ++x)
        if (in_ellipsoid(g.to_physical(x, y, z), spec.lesion_center, r)) m.set(x, y, z, true);
  return m;
}

PhantomCine generate_phantom_cine(const PhantomSpec& spec, const MotionTrajectory& trajectory, int jobs) {
  spec.validate();
  const std::size_t n = spec.frame_count();
  if (trajectory.size() != n)
    throw ConfigError("phantom: trajectory has " + std::to_string(trajectory.size()) + " frames, spec has " +
                      std::to_string(n));
  const Geometry g = spec.geometry();

  // The lesion must stay inside the grid under every displacement.
  const Vec3 hi_mm = g.to_physical(g.dims[0] - 1, g.dims[1] - 1, g.dims[2] - 1);
  for (const Vec3& d : trajectory.displacements)
    for (int a = 0; a < 3; ++a) {
      const double lo = spec.lesion_center[a] + d[a] - spec.lesion_radii[a];
      const double hi = spec.lesion_center[a] + d[a] + spec.lesion_radii[a];
      if (lo < g.origin[a] || hi > hi_mm[a])
        throw GeometryError("phantom: lesion leaves the grid under the requested motion");
    }

  const Volume3 texture = phantom_texture(spec);
  const Mask3 lesion = lesion_mask(spec);
  const LognormalParams lp = spec.lesion.params(), bp = spec.background.params();

  std::vector<Volume3> frames(n);
  std::vector<Mask3> masks(n);
  std::vector<double> times(n);
  for (std::size_t i = 0; i < n; ++i) times[i] = static_cast<double>(i) / spec.frame_rate;

  parallel_for(n, jobs, [&](std::size_t i) {
    const double lv = lognormal_model(lp, times[i]);
    const double bv = lognormal_model(bp, times[i]);
    NormalStream rng(mix(spec.seed, i + 1));
    Volume3 clean(g);
    for (std::size_t v = 0; v < clean.size(); ++v) {
      const double model = (lesion[v] ? lv : bv) * texture[v];
      const double noisy = model * (1.0 + spec.speckle_sigma * rng.next()) + spec.additive_sigma * rng.next();
      clean[v] = static_cast<float>(std::max(0.0, noisy));
    }
    const AffineTransform& t = trajectory.transforms[i];
    if (t.max_abs_difference(AffineTransform::identity()) == 0.0) {
      frames[i] = std::move(clean);
      masks[i] = lesion;
    } else {
      frames[i] = resample(clean, SpatialMapping{t, Interpolation::cubic, 0.0f});
      for (std::size_t v = 0; v < frames[i].size(); ++v) frames[i][v] = std::max(frames[i][v], 0.0f);
      Mask3 m(g);
      for (int z = 0; z < g.dims[2]; ++z)
        for (int y = 0; y < g.dims[1]; ++y)
          for (int x = 0; x < g.dims[0]; ++x)
            if (in_ellipsoid(t.apply(g.to_physical(x, y, z)), spec.lesion_center, spec.lesion_radii))
              m.set(x, y, z, true);
      masks[i] = std::move(m);
    }
  });

  PhantomCine out;
  out.cine = Cine4(std::move(frames), std::move(times), spec.frame_rate);
  out.lesion_masks = std::move(masks);
  out.trajectory = trajectory;
  return out;
}

TimeIntensityCurve expected_tic(const PhantomSpec& spec, const Mask3& roi, double display_max) {
  require_same_grid(spec.geometry(), roi.geometry(), "expected_tic");
  if (roi.empty()) throw DegenerateError("expected_tic: empty roi");
  const Volume3 texture = phantom_texture(spec);
  const Mask3 lesion = lesion_mask(spec);
  double wl = 0.0, wb = 0.0;
  for (std::size_t v = 0; v < roi.size(); ++v) {
    if (!roi[v]) continue;
    (lesion[v] ? wl : wb) += texture[v];
  }
  const double count = static_cast<double>(roi.count());
  TimeIntensityCurve tic;
  tic.roi_voxels = roi.count();
  for (std::size_t i = 0; i < spec.frame_count(); ++i) {
    const double t = static_cast<double>(i) / spec.frame_rate;
    tic.times.push_back(t);
    const double v = (wl * lognormal_model(spec.lesion.params(), t) + wb * lognormal_model(spec.background.params(), t)) / count;
    tic.intensities.push_back(v / display_max);
  }
  return tic;
}

}  // namespace dceus
