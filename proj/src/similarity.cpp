#include "dceus/similarity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dceus/bspline_basis.hpp"

namespace dceus {

namespace {

inline bool is_valid(std::span<const std::uint8_t> valid, std::size_t i) {
  return valid.empty() || valid[i] != 0;
}

inline int fold(int k, int bins) { return std::clamp(k, 0, bins - 1); }

struct ParzenTaps {
  int first = 0;
  std::array<double, 4> w{};
  std::array<double, 4> dw{};  ///< d weight / d bin position
};

inline ParzenTaps parzen(double pos, bool with_derivative) {
  ParzenTaps taps;
  const double base = std::floor(pos);
  const double t = pos - base;
  taps.first = static_cast<int>(base) - 1;
  taps.w = cubic_weights(t);
  if (with_derivative) taps.dw = cubic_first_derivatives(t);
  return taps;
}

void check_range(const IntensityRange& r, const char* which) {
  if (!(r.width() > 0.0) || !std::isfinite(r.width()))
    throw DegenerateError(std::string("joint histogram: ") + which + " image has zero intensity range");
}

std::vector<double> as_double(std::span<const float> values) {
  return std::vector<double>(values.begin(), values.end());
}

std::vector<std::uint8_t> mask_bits(const Mask3* mask) {
  if (!mask) return {};
  return std::vector<std::uint8_t>(mask->data().begin(), mask->data().end());
}

}  // namespace

std::vector<double> JointHistogram::ref_marginal() const {
  std::vector<double> m(bins, 0.0);
  for (int r = 0; r < bins; ++r)
    for (int f = 0; f < bins; ++f) m[r] += at(r, f);
  return m;
}

std::vector<double> JointHistogram::flt_marginal() const {
  std::vector<double> m(bins, 0.0);
  for (int r = 0; r < bins; ++r)
    for (int f = 0; f < bins; ++f) m[f] += at(r, f);
  return m;
}

JointHistogram JointHistogram::transposed() const {
  JointHistogram t = *this;
  std::swap(t.ref_range, t.flt_range);
  for (int r = 0; r < bins; ++r)
    for (int f = 0; f < bins; ++f) t.at(f, r) = at(r, f);
  return t;
}

double bin_position(double value, const IntensityRange& range, int bins) {
  const double u = (value - range.min) / range.width();
  return std::clamp(u, 0.0, 1.0) * (bins - 1);
}

IntensityRange sample_range(std::span<const double> values, std::span<const std::uint8_t> valid) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!is_valid(valid, i)) continue;
    lo = std::min(lo, values[i]);
    hi = std::max(hi, values[i]);
  }
  if (lo > hi) throw DegenerateError("intensity range: no contributing samples");
  return {lo, hi};
}

JointHistogram histogram_from_samples(std::span<const double> ref, std::span<const double> flt,
                                      std::span<const std::uint8_t> valid, int bins,
                                      const IntensityRange& ref_range,
                                      const IntensityRange& flt_range) {
  if (bins < 2) throw ConfigError("joint histogram: bins must be >= 2");
  if (ref.size() != flt.size() || (!valid.empty() && valid.size() != ref.size()))
    throw GeometryError("joint histogram: sample count mismatch");
  check_range(ref_range, "reference");
  check_range(flt_range, "floating");

  JointHistogram h;
  h.bins = bins;
  h.ref_range = ref_range;
  h.flt_range = flt_range;
  h.counts.assign(static_cast<std::size_t>(bins) * bins, 0.0);
  std::size_t n = 0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    if (!is_valid(valid, i)) continue;
    ++n;
    const ParzenTaps r = parzen(bin_position(ref[i], ref_range, bins), false);
    const ParzenTaps f = parzen(bin_position(flt[i], flt_range, bins), false);
    for (int a = 0; a < 4; ++a) {
      if (r.w[a] == 0.0) continue;
      double* row = &h.counts[static_cast<std::size_t>(fold(r.first + a, bins)) * bins];
      for (int b = 0; b < 4; ++b) row[fold(f.first + b, bins)] += r.w[a] * f.w[b];
    }
  }
  if (n == 0) throw DegenerateError("joint histogram: no contributing voxels");
  h.total = static_cast<double>(n);
  return h;
}

EntropyTerms entropies(const JointHistogram& hist) {
  if (!(hist.total > 0.0)) throw DegenerateError("entropy: empty histogram");
  EntropyTerms e;
  const double inv = 1.0 / hist.total;
  for (double c : hist.counts)
    if (c > 0.0) e.joint -= c * inv * std::log(c * inv);
  for (double c : hist.ref_marginal())
    if (c > 0.0) e.ref -= c * inv * std::log(c * inv);
  for (double c : hist.flt_marginal())
    if (c > 0.0) e.flt -= c * inv * std::log(c * inv);
  return e;
}

double nmi(const JointHistogram& hist) {
  const EntropyTerms e = entropies(hist);
  if (!(e.joint > 0.0)) throw DegenerateError("nmi: zero joint entropy");
  return e.nmi();
}

std::vector<double> nmi_gradient_samples(std::span<const double> ref, std::span<const double> flt,
                                         std::span<const std::uint8_t> valid,
                                         const JointHistogram& hist) {
  if (ref.size() != flt.size() || (!valid.empty() && valid.size() != ref.size()))
    throw GeometryError("nmi gradient: sample count mismatch");
  const int bins = hist.bins;
  const EntropyTerms e = entropies(hist);
  if (!(e.joint > 0.0)) throw DegenerateError("nmi gradient: zero joint entropy");

  // dH/dv = -(1/N) sum dh * log p; the "+1" term cancels because the Parzen
  // weight derivatives sum to zero.
  const double inv = 1.0 / hist.total;
  std::vector<double> log_joint(hist.counts.size(), 0.0);
  for (std::size_t k = 0; k < hist.counts.size(); ++k)
    if (hist.counts[k] > 0.0) log_joint[k] = std::log(hist.counts[k] * inv);
  std::vector<double> log_flt(bins, 0.0);
  const auto fm = hist.flt_marginal();
  for (int f = 0; f < bins; ++f)
    if (fm[f] > 0.0) log_flt[f] = std::log(fm[f] * inv);

  const double sum_marg = e.ref + e.flt;
  const double hj2 = e.joint * e.joint;
  const double dpos_dv = (bins - 1) / hist.flt_range.width();

  std::vector<double> grad(ref.size(), 0.0);
  for (std::size_t i = 0; i < ref.size(); ++i) {
    if (!is_valid(valid, i)) continue;
    const double u = (flt[i] - hist.flt_range.min) / hist.flt_range.width();
    if (u < 0.0 || u > 1.0) continue;  // clamped: locally constant bin position
    const ParzenTaps r = parzen(bin_position(ref[i], hist.ref_range, bins), false);
    const ParzenTaps f = parzen(u * (bins - 1), true);
    double d_flt = 0.0;    // sum_j dw_j log pf_j
    double d_joint = 0.0;  // sum_ij w_i dw_j log p_ij
    for (int b = 0; b < 4; ++b) d_flt += f.dw[b] * log_flt[fold(f.first + b, bins)];
    for (int a = 0; a < 4; ++a) {
      if (r.w[a] == 0.0) continue;
      const double* row = &log_joint[static_cast<std::size_t>(fold(r.first + a, bins)) * bins];
      double s = 0.0;
      for (int b = 0; b < 4; ++b) s += f.dw[b] * row[fold(f.first + b, bins)];
      d_joint += r.w[a] * s;
    }
    const double dHf = -inv * d_flt * dpos_dv;
    const double dHj = -inv * d_joint * dpos_dv;
    grad[i] = (dHf * e.joint - sum_marg * dHj) / hj2;
  }
  return grad;
}

JointHistogram joint_histogram(const Volume3& ref, const Volume3& flt, int bins, const Mask3* mask) {
  require_same_grid(ref.geometry(), flt.geometry(), "joint_histogram");
  if (mask) {
    require_same_grid(ref.geometry(), mask->geometry(), "joint_histogram");
    if (mask->empty()) throw DegenerateError("joint_histogram: empty mask");
  }
  const auto r = as_double(ref.data());
  const auto f = as_double(flt.data());
  const auto valid = mask_bits(mask);
  return histogram_from_samples(r, f, valid, bins, sample_range(r, valid), sample_range(f, valid));
}

std::vector<double> nmi_gradient(const Volume3& ref, const Volume3& flt, const JointHistogram& hist,
                                 const Mask3* mask) {
  require_same_grid(ref.geometry(), flt.geometry(), "nmi_gradient");
  if (mask) require_same_grid(ref.geometry(), mask->geometry(), "nmi_gradient");
  const auto valid = mask_bits(mask);
  const std::size_t contributing = mask ? mask->count() : ref.size();
  if (static_cast<double>(contributing) != hist.total)
    throw GeometryError("nmi_gradient: histogram was not built from these images");
  return nmi_gradient_samples(as_double(ref.data()), as_double(flt.data()), valid, hist);
}

double ncc(std::span<const float> a, std::span<const float> b, std::span<const std::uint8_t> valid) {
  if (a.size() != b.size() || (!valid.empty() && valid.size() != a.size()))
    throw GeometryError("ncc: sample count mismatch");
  double sa = 0.0, sb = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!is_valid(valid, i)) continue;
    sa += a[i];
    sb += b[i];
    ++n;
  }
  if (n == 0) throw DegenerateError("ncc: no contributing voxels");
  const double ma = sa / n, mb = sb / n;
  double saa = 0.0, sbb = 0.0, sab = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!is_valid(valid, i)) continue;
    const double da = a[i] - ma, db = b[i] - mb;
    saa += da * da;
    sbb += db * db;
    sab += da * db;
  }
  if (!(saa > 0.0) || !(sbb > 0.0)) throw DegenerateError("ncc: zero variance input");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

double ncc(const Volume3& a, const Volume3& b, const Mask3* mask) {
  require_same_grid(a.geometry(), b.geometry(), "ncc");
  if (mask) {
    require_same_grid(a.geometry(), mask->geometry(), "ncc");
    return ncc(a.data(), b.data(), mask->data());
  }
  return ncc(a.data(), b.data());
}

}  // namespace dceus
