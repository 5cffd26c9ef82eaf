#pragma once

#include <vector>

#include "dceus/volume.hpp"

namespace dceus {

/// Separable Gaussian blur, sigma in voxels, truncated at 3 sigma with
/// renormalised weights at the borders.
Volume3 gaussian_smooth(const Volume3& volume, double sigma_voxels);

/// Keeps every second voxel; the origin is unchanged and spacing doubles.
Geometry halved_geometry(const Geometry& g);
Volume3 decimate(const Volume3& volume);
Mask3 decimate(const Mask3& mask);

/// Coarse-to-fine stack, index 0 is full resolution. Each coarser level is a
/// sigma = 1 voxel blur followed by decimation. The level count is reduced
/// when an axis would shrink below `min_dim` voxels.
std::vector<Volume3> build_pyramid(const Volume3& volume, int levels, int min_dim = 8);
std::vector<Mask3> build_mask_pyramid(const Mask3& mask, int levels);

/// Number of levels actually achievable for `g`.
int feasible_levels(const Geometry& g, int requested, int min_dim = 8);

}  // namespace dceus
