#include "dceus/volume.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace dceus {

Index3 Geometry::coords(std::size_t linear) const {
  const std::size_t nx = dims[0];
  const std::size_t nxy = nx * dims[1];
  return {static_cast<int>(linear % nx), static_cast<int>((linear % nxy) / nx),
          static_cast<int>(linear / nxy)};
}

Vec3 Geometry::extent() const {
  return Vec3((dims[0] - 1) * spacing[0], (dims[1] - 1) * spacing[1],
              (dims[2] - 1) * spacing[2]);
}

void Geometry::validate() const {
  for (int a = 0; a < 3; ++a) {
    if (dims[a] < 1) throw ConfigError("geometry: dims must be positive");
    if (!(spacing[a] > 0.0) || !std::isfinite(spacing[a]))
      throw ConfigError("geometry: spacing must be positive and finite");
    if (!std::isfinite(origin[a])) throw ConfigError("geometry: origin must be finite");
  }
}

bool Geometry::same_grid(const Geometry& other, double tol) const {
  if (dims != other.dims) return false;
  for (int a = 0; a < 3; ++a) {
    if (std::abs(spacing[a] - other.spacing[a]) > tol * std::max(1.0, spacing[a])) return false;
    if (std::abs(origin[a] - other.origin[a]) > tol * std::max(1.0, std::abs(origin[a])))
      return false;
  }
  return true;
}

void require_same_grid(const Geometry& a, const Geometry& b, const char* what) {
  if (!a.same_grid(b)) {
    std::ostringstream msg;
    msg << what << ": geometry mismatch (" << a.dims[0] << "x" << a.dims[1] << "x" << a.dims[2]
        << " vs " << b.dims[0] << "x" << b.dims[1] << "x" << b.dims[2] << ")";
    throw GeometryError(msg.str());
  }
}

Volume3::Volume3(const Geometry& geometry, float fill)
    : geometry_(geometry), data_(geometry.voxel_count(), fill) {
  geometry_.validate();
  if (!std::isfinite(fill)) throw ConfigError("volume: non-finite fill value");
}

Volume3::Volume3(const Geometry& geometry, std::vector<float> data)
    : geometry_(geometry), data_(std::move(data)) {
  geometry_.validate();
  if (data_.size() != geometry_.voxel_count())
    throw GeometryError("volume: data length does not match dims");
  if (!all_finite()) throw ConfigError("volume: non-finite voxel value");
}

bool Volume3::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

Mask3::Mask3(const Geometry& geometry, bool fill)
    : geometry_(geometry), data_(geometry.voxel_count(), fill ? 1 : 0) {
  geometry_.validate();
}

Mask3::Mask3(const Geometry& geometry, std::vector<std::uint8_t> data)
    : geometry_(geometry), data_(std::move(data)) {
  geometry_.validate();
  if (data_.size() != geometry_.voxel_count())
    throw GeometryError("mask: data length does not match dims");
  for (auto& v : data_) v = v ? 1 : 0;
}

std::size_t Mask3::count() const {
  return static_cast<std::size_t>(std::count(data_.begin(), data_.end(), std::uint8_t{1}));
}

std::optional<std::pair<Index3, Index3>> Mask3::bounding_box() const {
  Index3 lo{geometry_.dims[0], geometry_.dims[1], geometry_.dims[2]};
  Index3 hi{-1, -1, -1};
  for (int z = 0; z < geometry_.dims[2]; ++z)
    for (int y = 0; y < geometry_.dims[1]; ++y)
      for (int x = 0; x < geometry_.dims[0]; ++x) {
        if (!(*this)(x, y, z)) continue;
        const Index3 p{x, y, z};
        for (int a = 0; a < 3; ++a) {
          lo[a] = std::min(lo[a], p[a]);
          hi[a] = std::max(hi[a], p[a]);
        }
      }
  if (hi[0] < 0) return std::nullopt;
  return std::make_pair(lo, hi);
}

Mask3 threshold_mask(const Volume3& volume, float threshold) {
  std::vector<std::uint8_t> bits(volume.size());
  for (std::size_t i = 0; i < bits.size(); ++i) bits[i] = volume[i] > threshold ? 1 : 0;
  return Mask3(volume.geometry(), std::move(bits));
}

Cine4::Cine4(std::vector<Volume3> frames, std::vector<double> times,
             std::optional<double> frame_rate_hint)
    : frames_(std::move(frames)), times_(std::move(times)), frame_rate_hint_(frame_rate_hint) {
  if (frames_.size() < 2) throw ConfigError("cine: at least two frames are required");
  if (times_.size() != frames_.size())
    throw ConfigError("cine: one timestamp per frame is required");
  for (std::size_t n = 1; n < frames_.size(); ++n) {
    require_same_grid(frames_[0].geometry(), frames_[n].geometry(), "cine");
    if (!(times_[n] > times_[n - 1])) throw ConfigError("cine: times must strictly increase");
  }
  for (double t : times_)
    if (!std::isfinite(t)) throw ConfigError("cine: non-finite timestamp");
}

Cine4 Cine4::uniform(std::vector<Volume3> frames, double frame_rate) {
  if (!(frame_rate > 0.0)) throw ConfigError("cine: frame rate must be positive");
  std::vector<double> times(frames.size());
  for (std::size_t n = 0; n < times.size(); ++n) times[n] = static_cast<double>(n) / frame_rate;
  return Cine4(std::move(frames), std::move(times), frame_rate);
}

Volume3 average_frames(std::span<const Volume3> frames, std::span<const double> weights) {
  if (frames.empty()) throw ConfigError("average_frames: empty frame list");
  if (!weights.empty() && weights.size() != frames.size())
    throw ConfigError("average_frames: weight count differs from frame count");
  double total = 0.0;
  for (std::size_t n = 0; n < frames.size(); ++n) {
    require_same_grid(frames[0].geometry(), frames[n].geometry(), "average_frames");
    const double w = weights.empty() ? 1.0 : weights[n];
    if (!(w >= 0.0) || !std::isfinite(w))
      throw ConfigError("average_frames: weights must be nonnegative");
    total += w;
  }
  if (!(total > 0.0)) throw DegenerateError("average_frames: weights sum to zero");

  const std::size_t count = frames[0].size();
  std::vector<double> acc(count, 0.0);
  for (std::size_t n = 0; n < frames.size(); ++n) {
    const double w = (weights.empty() ? 1.0 : weights[n]) / total;
    if (w == 0.0) continue;
    const auto src = frames[n].data();
    for (std::size_t i = 0; i < count; ++i) acc[i] += w * src[i];
  }
  std::vector<float> out(count);
  std::transform(acc.begin(), acc.end(), out.begin(), [](double v) { return static_cast<float>(v); });
  return Volume3(frames[0].geometry(), std::move(out));
}

double frame_mean_intensity(const Volume3& volume, const Mask3* mask) {
  const auto data = volume.data();
  if (mask == nullptr) {
    if (data.empty()) throw DegenerateError("frame_mean_intensity: empty volume");
    return std::accumulate(data.begin(), data.end(), 0.0) / static_cast<double>(data.size());
  }
  require_same_grid(volume.geometry(), mask->geometry(), "frame_mean_intensity");
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if ((*mask)[i]) {
      sum += data[i];
      ++n;
    }
  }
  if (n == 0) throw DegenerateError("frame_mean_intensity: empty mask");
  return sum / static_cast<double>(n);
}

}  // namespace dceus
