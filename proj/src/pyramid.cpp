#include "dceus/pyramid.hpp"

#include <cmath>

namespace dceus {

Volume3 gaussian_smooth(const Volume3& volume, double sigma) {
  if (!(sigma > 0.0)) return volume;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  for (int k = -radius; k <= radius; ++k) kernel[k + radius] = std::exp(-0.5 * k * k / (sigma * sigma));

  const Geometry& g = volume.geometry();
  std::vector<double> cur(volume.data().begin(), volume.data().end());
  std::vector<double> next(cur.size());
  for (int axis = 0; axis < 3; ++axis) {
    const int n = g.dims[axis];
    if (n < 2) continue;
    const std::ptrdiff_t stride = axis == 0 ? 1
                                  : axis == 1 ? g.dims[0]
                                              : static_cast<std::ptrdiff_t>(g.dims[0]) * g.dims[1];
    for (int z = 0; z < g.dims[2]; ++z)
      for (int y = 0; y < g.dims[1]; ++y)
        for (int x = 0; x < g.dims[0]; ++x) {
          const int pos = axis == 0 ? x : axis == 1 ? y : z;
          const std::size_t i = g.index(x, y, z);
          double sum = 0.0, wsum = 0.0;
          const int lo = std::max(-radius, -pos);
          const int hi = std::min(radius, n - 1 - pos);
          for (int k = lo; k <= hi; ++k) {
            const double w = kernel[k + radius];
            sum += w * cur[i + k * stride];
            wsum += w;
          }
          next[i] = sum / wsum;
        }
    cur.swap(next);
  }
  std::vector<float> out(cur.begin(), cur.end());
  return Volume3(g, std::move(out));
}

Geometry halved_geometry(const Geometry& g) {
  Geometry h = g;
  for (int a = 0; a < 3; ++a) {
    h.dims[a] = (g.dims[a] + 1) / 2;
    h.spacing[a] = g.spacing[a] * 2.0;
  }
  return h;
}

Volume3 decimate(const Volume3& volume) {
  const Geometry& g = volume.geometry();
  const Geometry h = halved_geometry(g);
  Volume3 out(h);
  for (int z = 0; z < h.dims[2]; ++z)
    for (int y = 0; y < h.dims[1]; ++y)
      for (int x = 0; x < h.dims[0]; ++x) out(x, y, z) = volume(2 * x, 2 * y, 2 * z);
  return out;
}

Mask3 decimate(const Mask3& mask) {
  const Geometry h = halved_geometry(mask.geometry());
  Mask3 out(h);
  for (int z = 0; z < h.dims[2]; ++z)
    for (int y = 0; y < h.dims[1]; ++y)
      for (int x = 0; x < h.dims[0]; ++x) out.set(x, y, z, mask(2 * x, 2 * y, 2 * z));
  return out;
}

int feasible_levels(const Geometry& g, int requested, int min_dim) {
  int levels = 1;
  Geometry cur = g;
  while (levels < requested) {
    const Geometry next = halved_geometry(cur);
    if (next.dims[0] < min_dim || next.dims[1] < min_dim || next.dims[2] < min_dim) break;
    cur = next;
    ++levels;
  }
  return levels;
}

std::vector<Volume3> build_pyramid(const Volume3& volume, int levels, int min_dim) {
  levels = feasible_levels(volume.geometry(), levels, min_dim);
  std::vector<Volume3> pyramid;
  pyramid.reserve(levels);
  pyramid.push_back(volume);
  for (int l = 1; l < levels; ++l) pyramid.push_back(decimate(gaussian_smooth(pyramid.back(), 1.0)));
  return pyramid;
}

std::vector<Mask3> build_mask_pyramid(const Mask3& mask, int levels) {
  std::vector<Mask3> pyramid;
  pyramid.reserve(levels);
  pyramid.push_back(mask);
  for (int l = 1; l < levels; ++l) pyramid.push_back(decimate(pyramid.back()));
  return pyramid;
}

}  // namespace dceus
