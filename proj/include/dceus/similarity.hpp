#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dceus/volume.hpp"

namespace dceus {

struct IntensityRange {
  double min = 0.0;
  double max = 1.0;
  double width() const { return max - min; }
};

/// Parzen-smoothed joint histogram of (reference, floating) intensity pairs.
/// counts is row-major with the reference intensity indexing rows.
struct JointHistogram {
  int bins = 0;
  std::vector<double> counts;
  IntensityRange ref_range;
  IntensityRange flt_range;
  double total = 0.0;

  double at(int r, int f) const { return counts[static_cast<std::size_t>(r) * bins + f]; }
  double& at(int r, int f) { return counts[static_cast<std::size_t>(r) * bins + f]; }
  std::vector<double> ref_marginal() const;
  std::vector<double> flt_marginal() const;
  JointHistogram transposed() const;
};

/// Shannon entropies (nats) of a normalised joint histogram.
struct EntropyTerms {
  double ref = 0.0;
  double flt = 0.0;
  double joint = 0.0;
  double nmi() const { return (ref + flt) / joint; }
};

/// Continuous bin coordinate of `value` in [0, bins - 1]; values outside the
/// range are clamped.
double bin_position(double value, const IntensityRange& range, int bins);

/// [min, max] over the samples flagged valid (all when `valid` is empty).
IntensityRange sample_range(std::span<const double> values, std::span<const std::uint8_t> valid);

/// Cubic-spline Parzen deposition of every valid sample pair. Kernel mass that
/// falls beyond the first or last bin is folded into that bin so the total
/// equals the number of valid samples.
JointHistogram histogram_from_samples(std::span<const double> ref, std::span<const double> flt,
                                      std::span<const std::uint8_t> valid, int bins,
                                      const IntensityRange& ref_range,
                                      const IntensityRange& flt_range);

EntropyTerms entropies(const JointHistogram& hist);

/// (H(R) + H(F)) / H(R, F).
double nmi(const JointHistogram& hist);

/// dNMI / d(flt sample) for every sample, with the histogram ranges held
/// fixed; zero for samples flagged invalid.
std::vector<double> nmi_gradient_samples(std::span<const double> ref, std::span<const double> flt,
                                         std::span<const std::uint8_t> valid,
                                         const JointHistogram& hist);

/// Volume-level histogram; ranges are the [min, max] over contributing voxels.
JointHistogram joint_histogram(const Volume3& ref, const Volume3& flt, int bins,
                               const Mask3* mask = nullptr);

/// Per-voxel dNMI / d(flt voxel) for a histogram built from (ref, flt).
std::vector<double> nmi_gradient(const Volume3& ref, const Volume3& flt,
                                 const JointHistogram& hist, const Mask3* mask = nullptr);

/// Pearson correlation of voxel intensities over the contributing voxels.
double ncc(const Volume3& a, const Volume3& b, const Mask3* mask = nullptr);
double ncc(std::span<const float> a, std::span<const float> b, std::span<const std::uint8_t> valid = {});

}  // namespace dceus
