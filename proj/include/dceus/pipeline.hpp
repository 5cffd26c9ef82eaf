#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dceus/affine.hpp"
#include "dceus/affine_reg.hpp"
#include "dceus/bspline.hpp"
#include "dceus/ffd_reg.hpp"
#include "dceus/resample.hpp"
#include "dceus/volume.hpp"

namespace dceus {

struct PipelineConfig {
  int window_size = 5;
  double start_threshold_factor = 1.20;
  int baseline_frame_count = 5;
  AffineRegConfig affine;
  FfdConfig ffd;
  bool nonrigid = true;  ///< false stops after the affine stage of each pass
  std::optional<std::vector<double>> master_weights;
  int parallelism = 1;
  Interpolation output_interpolation = Interpolation::cubic;

  /// Throws ConfigError on out-of-range fields.
  void validate() const;
};

struct StartDetection {
  std::size_t frame = 0;
  double baseline_mean = 0.0;
  double threshold = 0.0;
  double frame_mean = 0.0;  ///< mean of the detected frame
};

/// First frame whose mean intensity exceeds factor * baseline, where the
/// baseline is the mean over the first baseline_frame_count frames.
StartDetection detect_start_frame(const Cine4& cine, const PipelineConfig& cfg,
                                  const Mask3* mask = nullptr);

struct WindowPlan {
  std::size_t start_frame = 0;
  int nominal_size = 5;
  std::vector<std::pair<std::size_t, std::size_t>> windows;  ///< [begin, end)
};

/// floor((N - s) / size) windows; the remainder adds one frame to each of the
/// trailing windows. A remainder beyond the window count is spread evenly, so
/// sizes then differ by at most one but can exceed size + 1.
WindowPlan plan_windows(std::size_t n_frames, std::size_t start, int window_size);

/// One registration stage of one frame: affine part and optional lattice
/// (whose init equals the affine).
struct StageMapping {
  AffineTransform affine;
  std::optional<BSplineGrid> grid;

  /// Pull-back mapping usable by resample / resample_mask.
  std::variant<AffineTransform, DenseDisplacementField> transform() const;
};

enum class FrameStatus { pass_through, full, affine_only, unchanged };
const char* to_string(FrameStatus status);

struct StageSummary {
  FrameStatus status = FrameStatus::unchanged;
  AffineTransform affine;
  double max_displacement_mm = 0.0;   ///< lattice part only
  double mean_displacement_mm = 0.0;
  bool converged = true;
  int iterations = 0;
  std::vector<std::string> warnings;
};

struct FrameRecord {
  std::size_t frame = 0;
  int window = -1;  ///< -1 for pass-through frames
  FrameStatus status = FrameStatus::pass_through;  ///< worst of both passes
  std::optional<StageSummary> first_pass;
  std::optional<StageSummary> second_pass;
};

struct CorrectionReport {
  StartDetection start;
  double start_threshold_factor = 0.0;
  WindowPlan plan;
  std::vector<AffineTransform> window_affines;  ///< T' per window
  std::vector<FrameRecord> frames;
  std::vector<std::string> warnings;
  std::map<std::string, double> timings_s;
};

/// Mappings applied to one frame, first pass then second pass.
struct FrameCorrection {
  std::optional<StageMapping> first;
  std::optional<StageMapping> second;
};

struct CorrectionResult {
  Cine4 corrected;
  CorrectionReport report;
  std::vector<FrameCorrection> corrections;  ///< one per frame
};

/// Two-pass window-based motion correction. `mask` (reference space) limits
/// the registration region.
CorrectionResult motion_correct(const Cine4& cine, const Mask3* mask, const PipelineConfig& cfg);

/// Carries a per-frame mask through the same two resamplings as its frame.
Mask3 apply_correction(const Mask3& mask, const FrameCorrection& correction);

/// Registration of one frame to a reference with the fallback ladder
/// full -> affine-only -> unchanged. With `fixed_affine` the affine stage is
/// skipped and that transform initializes the lattice.
struct FrameRegistration {
  Volume3 output;
  StageMapping mapping;
  StageSummary summary;
};
FrameRegistration register_frame(const Volume3& ref, const Volume3& frame, const Mask3* mask,
                                 const PipelineConfig& cfg,
                                 const std::optional<AffineTransform>& fixed_affine = std::nullopt);

}  // namespace dceus
