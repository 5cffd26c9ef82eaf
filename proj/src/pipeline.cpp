#include "dceus/pipeline.hpp"

#include <chrono>
#include <cmath>

#include <spdlog/spdlog.h>

#include "dceus/parallel.hpp"

namespace dceus {

void PipelineConfig::validate() const {
  if (window_size < 3 || window_size > 6) throw ConfigError("window_size must be in [3, 6]");
  if (!(start_threshold_factor > 1.0)) throw ConfigError("start_threshold_factor must be > 1");
  if (baseline_frame_count < 1) throw ConfigError("baseline_frame_count must be >= 1");
  if (parallelism < 1) throw ConfigError("parallelism must be >= 1");
  if (master_weights) {
    for (double w : *master_weights)
      if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("master_weights must be finite and >= 0");
  }
  affine.validate();
  ffd.validate();
}

StartDetection detect_start_frame(const Cine4& cine, const PipelineConfig& cfg, const Mask3* mask) {
  const std::size_t n = cine.frame_count();
  const auto base = static_cast<std::size_t>(cfg.baseline_frame_count);
  if (n <= base) throw StartDetectionError("start detection: cine has no frames after the baseline");
  if (mask) require_same_grid(cine.geometry(), mask->geometry(), "start detection mask");
  std::vector<double> means(n);
  for (std::size_t i = 0; i < n; ++i) means[i] = frame_mean_intensity(cine.frame(i), mask);
  double baseline = 0.0;
  for (std::size_t i = 0; i < base; ++i) baseline += means[i];
  baseline /= static_cast<double>(base);
  if (!(baseline > 0.0)) throw StartDetectionError("start detection: baseline mean intensity is zero");
  StartDetection out;
  out.baseline_mean = baseline;
  out.threshold = cfg.start_threshold_factor * baseline;
  for (std::size_t i = 0; i < n; ++i) {
    if (means[i] > out.threshold) {
      out.frame = i;
      out.frame_mean = means[i];
      return out;
    }
  }
  throw StartDetectionError("start detection: no frame exceeds " +
                            std::to_string(cfg.start_threshold_factor) + " x baseline mean " +
                            std::to_string(baseline) + " (no injection found)");
}

WindowPlan plan_windows(std::size_t n_frames, std::size_t start, int window_size) {
  if (window_size < 1) throw ConfigError("plan_windows: window size must be positive");
  const auto w = static_cast<std::size_t>(window_size);
  if (start > n_frames || n_frames - start < w)
    throw StartDetectionError("plan_windows: " + std::to_string(n_frames > start ? n_frames - start : 0) +
                              " post-injection frames, need at least " + std::to_string(w));
  WindowPlan plan;
  plan.start_frame = start;
  plan.nominal_size = window_size;
  const std::size_t total = n_frames - start;
  const std::size_t count = total / w;
  const std::size_t rem = total % w;
  // A remainder larger than the window count spreads as evenly as it can.
  const std::size_t extra = rem / count, spill = rem % count;
  std::size_t begin = start;
  for (std::size_t g = 0; g < count; ++g) {
    const std::size_t size = w + extra + (g >= count - spill ? 1 : 0);
    plan.windows.emplace_back(begin, begin + size);
    begin += size;
  }
  return plan;
}

std::variant<AffineTransform, DenseDisplacementField> StageMapping::transform() const {
  if (grid) return deformation_field(*grid);
  return affine;
}

const char* to_string(FrameStatus status) {
  switch (status) {
    case FrameStatus::pass_through: return "pass-through";
    case FrameStatus::full: return "full";
    case FrameStatus::affine_only: return "affine-only";
    case FrameStatus::unchanged: return "unchanged";
  }
  return "unknown";
}

FrameRegistration register_frame(const Volume3& ref, const Volume3& frame, const Mask3* mask,
                                 const PipelineConfig& cfg,
                                 const std::optional<AffineTransform>& fixed_affine) {
  FrameRegistration out;
  out.summary.status = FrameStatus::unchanged;
  AffineTransform t = AffineTransform::identity();
  if (fixed_affine) {
    t = *fixed_affine;
  } else {
    try {
      t = affine_register(ref, frame, mask, cfg.affine);
    } catch (const Error& e) {
      out.summary.warnings.push_back(std::string("affine stage failed: ") + e.what());
      out.output = frame;
      out.mapping.affine = AffineTransform::identity();
      return out;
    }
  }
  out.mapping.affine = t;
  out.summary.affine = t;
  out.summary.status = FrameStatus::affine_only;
  if (cfg.nonrigid) {
    try {
      FfdResult r = ffd_register(ref, frame, t, mask, cfg.ffd);
      const DenseDisplacementField u = evaluate_field(r.grid);
      out.summary.max_displacement_mm = u.max_norm();
      out.summary.mean_displacement_mm = u.mean_norm();
      out.summary.converged = r.converged;
      out.summary.iterations = r.iterations;
      for (auto& w : r.warnings) out.summary.warnings.push_back(std::move(w));
      out.mapping.grid = std::move(r.grid);
      out.summary.status = FrameStatus::full;
    } catch (const Error& e) {
      out.summary.warnings.push_back(std::string("non-rigid stage failed: ") + e.what());
    }
  }
  out.output = resample(frame, SpatialMapping{out.mapping.transform(), cfg.output_interpolation, 0.0f});
  return out;
}

Mask3 apply_correction(const Mask3& mask, const FrameCorrection& correction) {
  Mask3 out = mask;
  if (correction.first) out = resample_mask(out, correction.first->transform());
  if (correction.second) out = resample_mask(out, correction.second->transform());
  return out;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

FrameStatus worse(FrameStatus a, FrameStatus b) {
  auto rank = [](FrameStatus s) {
    switch (s) {
      case FrameStatus::pass_through: return 0;
      case FrameStatus::full: return 1;
      case FrameStatus::affine_only: return 2;
      case FrameStatus::unchanged: return 3;
    }
    return 3;
  };
  return rank(a) >= rank(b) ? a : b;
}

}  // namespace

CorrectionResult motion_correct(const Cine4& cine, const Mask3* mask, const PipelineConfig& cfg) {
  cfg.validate();
  if (mask) require_same_grid(cine.geometry(), mask->geometry(), "motion_correct mask");
  const std::size_t n = cine.frame_count();
  if (cfg.master_weights && cfg.master_weights->size() != n)
    throw ConfigError("master_weights: expected " + std::to_string(n) + " weights");
  const Mask3* reg_mask = (mask && !mask->empty()) ? mask : nullptr;

  CorrectionResult result;
  CorrectionReport& report = result.report;
  report.start_threshold_factor = cfg.start_threshold_factor;
  const auto t_all = Clock::now();

  auto t0 = Clock::now();
  const Volume3 master =
      cfg.master_weights ? average_frames(cine.frames(), *cfg.master_weights) : average_frames(cine.frames());
  report.start = detect_start_frame(cine, cfg);
  report.plan = plan_windows(n, report.start.frame, cfg.window_size);
  report.timings_s["setup"] = seconds_since(t0);
  spdlog::info("start frame {} (mean {:.4g} > {:.4g}), {} windows", report.start.frame,
               report.start.frame_mean, report.start.threshold, report.plan.windows.size());

  const auto& windows = report.plan.windows;
  const std::size_t s = report.start.frame;
  std::vector<int> window_of(n, -1);
  std::vector<Volume3> window_refs;
  for (std::size_t g = 0; g < windows.size(); ++g) {
    for (std::size_t i = windows[g].first; i < windows[g].second; ++i) window_of[i] = static_cast<int>(g);
    std::span<const Volume3> frames(cine.frames().data() + windows[g].first,
                                    windows[g].second - windows[g].first);
    window_refs.push_back(average_frames(frames));
  }

  // First pass: every post-injection frame against its window average.
  t0 = Clock::now();
  const std::size_t m = n - s;
  std::vector<FrameRegistration> first(m);
  parallel_for(m, cfg.parallelism, [&](std::size_t k) {
    const std::size_t i = s + k;
    first[k] = register_frame(window_refs[window_of[i]], cine.frame(i), reg_mask, cfg);
  });
  report.timings_s["first_pass"] = seconds_since(t0);
  spdlog::info("first pass done in {:.1f} s", report.timings_s["first_pass"]);

  // Second pass, window level: W_g' onto the master.
  t0 = Clock::now();
  std::vector<AffineTransform> window_affine(windows.size());
  std::vector<Volume3> window_refs2(windows.size());
  std::vector<std::string> window_warnings(windows.size());
  parallel_for(windows.size(), cfg.parallelism, [&](std::size_t g) {
    std::vector<Volume3> outs;
    for (std::size_t i = windows[g].first; i < windows[g].second; ++i) outs.push_back(first[i - s].output);
    const Volume3 avg = average_frames(outs);
    try {
      window_affine[g] = affine_register(master, avg, reg_mask, cfg.affine);
    } catch (const Error& e) {
      window_affine[g] = AffineTransform::identity();
      window_warnings[g] = "window " + std::to_string(g) + ": master alignment failed (" + e.what() +
                           "), identity used";
    }
    window_refs2[g] = resample(avg, SpatialMapping{window_affine[g], cfg.output_interpolation, 0.0f});
  });
  for (auto& w : window_warnings)
    if (!w.empty()) report.warnings.push_back(w);
  report.window_affines = window_affine;
  report.timings_s["window_alignment"] = seconds_since(t0);

  // Second pass, frame level.
  t0 = Clock::now();
  std::vector<FrameRegistration> second(m);
  parallel_for(m, cfg.parallelism, [&](std::size_t k) {
    const std::size_t i = s + k;
    const int g = window_of[i];
    second[k] = register_frame(window_refs2[g], first[k].output, reg_mask, cfg, window_affine[g]);
  });
  report.timings_s["second_pass"] = seconds_since(t0);
  spdlog::info("second pass done in {:.1f} s", report.timings_s["second_pass"]);

  std::vector<Volume3> frames;
  frames.reserve(n);
  result.corrections.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    FrameRecord rec;
    rec.frame = i;
    if (i < s) {
      frames.push_back(cine.frame(i));
      report.frames.push_back(rec);
      continue;
    }
    const std::size_t k = i - s;
    rec.window = window_of[i];
    rec.first_pass = first[k].summary;
    rec.second_pass = second[k].summary;
    rec.status = worse(first[k].summary.status, second[k].summary.status);
    for (const auto& w : first[k].summary.warnings)
      report.warnings.push_back("frame " + std::to_string(i) + " pass 1: " + w);
    for (const auto& w : second[k].summary.warnings)
      report.warnings.push_back("frame " + std::to_string(i) + " pass 2: " + w);
    result.corrections[i].first = std::move(first[k].mapping);
    result.corrections[i].second = std::move(second[k].mapping);
    frames.push_back(std::move(second[k].output));
    report.frames.push_back(std::move(rec));
  }
  result.corrected = Cine4(std::move(frames), cine.times(), cine.frame_rate_hint());
  report.timings_s["total"] = seconds_since(t_all);
  return result;
}

}  // namespace dceus
