#pragma once

#include <array>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "dceus/volume.hpp"

namespace dceus {

/// On-disk voxel types accepted by the reader and writer.
enum class NiftiType : short {
  uint8 = 2,
  int16 = 4,
  float32 = 16,
  float64 = 64,
  uint16 = 512,
};

/// Orientation fields carried through unchanged when a file is rewritten.
struct NiftiOrientation {
  short qform_code = 0;
  short sform_code = 0;
  std::array<float, 3> quatern{0.0f, 0.0f, 0.0f};
  std::array<float, 3> qoffset{0.0f, 0.0f, 0.0f};
  std::array<float, 12> srow{};
  float qfac = 1.0f;
};

/// Decoded header fields that the toolkit consumes.
struct NiftiHeaderView {
  int ndim = 3;
  std::array<int, 4> dims{1, 1, 1, 1};  ///< x, y, z, t
  NiftiType datatype = NiftiType::float32;
  std::array<double, 3> spacing_mm{1.0, 1.0, 1.0};
  double time_step_s = 0.0;  ///< 0 when the header carries no timing
  double time_offset_s = 0.0;
  float scl_slope = 1.0f;
  float scl_inter = 0.0f;
  NiftiOrientation orientation;
  std::string description;

  Geometry geometry() const;
};

/// Header plus voxel values with scl_slope/scl_inter applied, frames
/// concatenated with x fastest.
struct NiftiImage {
  NiftiHeaderView header;
  std::vector<double> voxels;
};

/// Reads .nii or gzip-compressed .nii.gz (detected from content).
NiftiImage read_nifti(const std::string& path);
NiftiHeaderView read_nifti_header(const std::string& path);

/// Writes a single-file NIfTI-1; gzip when `path` ends in ".gz". `t_steps`
/// frames of `header.geometry()` are taken from `voxels`.
void write_nifti(const std::string& path, const NiftiHeaderView& header,
                 std::span<const double> voxels, NiftiType datatype);

Volume3 load_volume(const std::string& path);
/// Timing: `frame_rate` when given, else the header's time step, else 1 Hz.
Cine4 load_cine(const std::string& path, std::optional<double> frame_rate = std::nullopt);
/// Any supported volume thresholded at > 0.
Mask3 load_mask(const std::string& path);
std::vector<Mask3> load_mask_sequence(const std::string& path);

enum class LoadKind { automatic, volume, cine, mask };
using LoadedImage = std::variant<Volume3, Cine4, Mask3>;
/// `automatic` yields a Cine4 for 4D files with more than one frame and a
/// Volume3 otherwise.
LoadedImage load(const std::string& path, LoadKind kind = LoadKind::automatic,
                 std::optional<double> frame_rate = std::nullopt);

void save(const Volume3& volume, const std::string& path, NiftiType datatype = NiftiType::float32,
          const NiftiOrientation* orientation = nullptr);
void save(const Cine4& cine, const std::string& path, NiftiType datatype = NiftiType::float32,
          const NiftiOrientation* orientation = nullptr);
/// Masks are always written as uint8 {0, 1}.
void save(const Mask3& mask, const std::string& path, const NiftiOrientation* orientation = nullptr);
void save_mask_sequence(std::span<const Mask3> masks, const std::string& path,
                        const NiftiOrientation* orientation = nullptr);

}  // namespace dceus
