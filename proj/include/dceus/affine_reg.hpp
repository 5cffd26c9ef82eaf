#pragma once

#include <optional>
#include <span>
#include <vector>

#include "dceus/affine.hpp"
#include "dceus/volume.hpp"

namespace dceus {

struct AffineRegConfig {
  int block_size = 4;              ///< voxels per block edge
  int search_radius = 3;           ///< voxels, per axis
  double block_keep_fraction = 0.5;
  double lts_trim_fraction = 0.10;
  int levels = 3;
  int max_outer_iterations = 10;
  double convergence_tol = 1e-3;   ///< largest corner displacement of an update, voxels

  /// Throws ConfigError on out-of-range fields.
  void validate() const;
};

enum class MatchDirection { forward, backward };

/// A block of the reference grid and the point it was found at in the floating
/// image; both in mm.
struct BlockCorrespondence {
  Vec3 ref_center;
  Vec3 matched_center;
  double score = 0.0;
  MatchDirection direction = MatchDirection::forward;
};

/// Corners of the retained non-overlapping blocks, ordered by decreasing
/// intensity variance (ties by tile index). A block is inside the mask when
/// at least half of its voxels are.
std::vector<Index3> select_blocks(const Volume3& volume, const Mask3* mask,
                                  const AffineRegConfig& cfg);

/// Searches each source block in `target` over integer offsets within the
/// radius, maximising local NCC, then refines the peak with one least-squares
/// gradient step. `target_valid` (optional) flags voxels that may be matched.
std::vector<BlockCorrespondence> match_blocks_one_way(const Volume3& source, const Volume3& target,
                                                      std::span<const Index3> blocks,
                                                      const AffineRegConfig& cfg,
                                                      std::span<const std::uint8_t> target_valid = {});

/// Symmetric matching: `ref_blocks` searched in `flt` (forward) and
/// `flt_blocks` searched in `ref` (backward, reported with the roles swapped
/// back so every correspondence maps reference -> floating). Throws
/// DegenerateError when nothing matched.
std::vector<BlockCorrespondence> match_blocks(const Volume3& ref, const Volume3& flt,
                                              std::span<const Index3> ref_blocks,
                                              std::span<const Index3> flt_blocks,
                                              const AffineRegConfig& cfg,
                                              std::span<const std::uint8_t> flt_valid = {});

/// Ordinary least-squares affine taking ref_center to matched_center.
AffineTransform fit_affine(std::span<const BlockCorrespondence> corr);

/// Least-trimmed-squares affine: refit on the best (1 - trim) fraction of
/// residuals until the retained set stops changing.
AffineTransform lts_fit_affine(std::span<const BlockCorrespondence> corr, double trim);

/// Multi-resolution block-matching registration. The result maps reference
/// points to floating points (pull-back), so resample(flt, result) lands on
/// the reference.
AffineTransform affine_register(const Volume3& ref, const Volume3& flt, const Mask3* mask,
                                const AffineRegConfig& cfg,
                                const std::optional<AffineTransform>& init = std::nullopt);

}  // namespace dceus
