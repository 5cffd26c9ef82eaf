#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "dceus/phantom.hpp"
#include "dceus/volume.hpp"

namespace dceus::testing {

inline Geometry cube(int n, double spacing = 1.0) {
  Geometry g;
  g.dims = {n, n, n};
  g.spacing = Vec3::Constant(spacing);
  return g;
}

/// Band-limited texture on an n^3 grid with a ball mask of `radius` voxels at
/// the centre.
inline PhantomSpec texture_spec(int n, double sigma_voxels = 1.5, std::uint64_t seed = 7) {
  PhantomSpec spec;
  spec.dims = {n, n, n};
  spec.texture_sigma_voxels = sigma_voxels;
  spec.seed = seed;
  spec.lesion_center = spec.geometry().extent() * 0.5;
  spec.lesion_radii = Vec3::Constant(n / 5.0);
  return spec;
}

inline Volume3 uniform_noise(const Geometry& g, std::uint64_t seed, float lo = 0.0f, float hi = 1.0f) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(lo, hi);
  Volume3 v(g);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = u(rng);
  return v;
}

inline Volume3 constant(const Geometry& g, float value) { return Volume3(g, value); }

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("dceus_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline Vec3 centroid(const Mask3& m) {
  Vec3 c = Vec3::Zero();
  std::size_t n = 0;
  const Geometry& g = m.geometry();
  for (int z = 0; z < g.dims[2]; ++z)
    for (int y = 0; y < g.dims[1]; ++y)
      for (int x = 0; x < g.dims[0]; ++x)
        if (m(x, y, z)) {
          c += g.to_physical(x, y, z);
          ++n;
        }
  return c / static_cast<double>(n);
}

}  // namespace dceus::testing
