// Acceptance runner. Prints one [PASS]/[FAIL] line per criterion and exits
// nonzero when any selected criterion fails.
//
//   dceus_acceptance                 every criterion
//   dceus_acceptance 1-3 4 7d        a subset (7d determinism, 7s speedup)

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <spdlog/spdlog.h>

#include "dceus/affine_reg.hpp"
#include "dceus/evaluation.hpp"
#include "dceus/ffd_reg.hpp"
#include "dceus/nifti.hpp"
#include "dceus/phantom.hpp"
#include "dceus/pipeline.hpp"
#include "dceus/resample.hpp"
#include "dceus/similarity.hpp"
#include "gradcheck.hpp"
#include "support.hpp"

using namespace dceus;
using Clock = std::chrono::steady_clock;

namespace {

// Tolerances.
constexpr double kJaccardFloor = 0.85;
constexpr double kJaccardGain = 0.10;
constexpr double kRuntimeLimitS = 600.0;
constexpr double kNccStillFraction = 0.9;
constexpr double kKineticsRelTol = 0.10;
constexpr double kTranslationTolVoxels = 0.25;
constexpr double kLinearTol = 0.01;
constexpr double kTreMedianVoxels = 1.0;
constexpr double kTreMaxVoxels = 2.0;
constexpr double kGradientRelTol = 1e-3;
constexpr int kGradientProbes = 100;
constexpr double kSpeedupFloor = 3.0;
constexpr double kIdentityTol = 1e-9;

struct Outcome {
  bool pass = true;
  std::vector<std::string> notes;
  void check(bool ok, const std::string& what) {
    if (!ok) pass = false;
    notes.push_back((ok ? "" : "FAILED ") + what);
  }
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void report(const std::string& id, const std::string& title, const Outcome& o, bool& all) {
  std::printf("[%s] criterion %s: %s\n", o.pass ? "PASS" : "FAIL", id.c_str(), title.c_str());
  for (const std::string& n : o.notes) std::printf("       %s\n", n.c_str());
  std::fflush(stdout);
  all = all && o.pass;
}

// ------------------------------------------------------------ shared phantom

struct Scenario {
  PhantomSpec spec;
  PhantomCine moving;
  Mask3 roi;
};

const Scenario& scenario() {
  static const Scenario s = [] {
    Scenario out;
    const MotionTrajectory traj = make_trajectory(out.spec, MotionSpec{});
    out.moving = generate_phantom_cine(out.spec, traj);
    out.roi = lesion_mask(out.spec, 8.0);
    return out;
  }();
  return s;
}

CorrectionResult correct(int jobs, double* seconds = nullptr) {
  const Scenario& s = scenario();
  PipelineConfig cfg;
  cfg.parallelism = jobs;
  const auto t0 = Clock::now();
  CorrectionResult r = motion_correct(s.moving.cine, &s.roi, cfg);
  if (seconds) *seconds = seconds_since(t0);
  return r;
}

// ------------------------------------------------------------ criteria 1-3

void criteria_1_to_3(bool& all) {
  const Scenario& s = scenario();
  double runtime = 0.0;
  const CorrectionResult r = correct(4, &runtime);
  const std::size_t start = r.report.start.frame;
  const std::size_t n = s.moving.cine.frame_count();

  {
    std::vector<Mask3> pre, post;
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < n; ++i) {
      pre.push_back(s.moving.lesion_masks[i]);
      post.push_back(apply_correction(s.moving.lesion_masks[i], r.corrections[i]));
      idx.push_back(i);
    }
    const double j0 = pairwise_overlap(pre, idx).mean;
    const double j1 = pairwise_overlap(post, idx).mean;
    Outcome o;
    o.notes.push_back(fmt("start frame %zu, %zu windows", start, r.report.plan.windows.size()));
    o.check(j1 >= kJaccardFloor, fmt("post Jaccard %.4f >= %.2f", j1, kJaccardFloor));
    o.check(j1 - j0 >= kJaccardGain, fmt("gain %.4f (pre %.4f) >= %.2f", j1 - j0, j0, kJaccardGain));
    o.check(runtime <= kRuntimeLimitS,
            fmt("runtime %.1f s at parallelism 4 on %u hardware threads <= %.0f s", runtime,
                std::thread::hardware_concurrency(), kRuntimeLimitS));
    report("1", "end-to-end phantom correction", o, all);
  }

  {
    const PhantomCine still = generate_phantom_cine(s.spec, make_trajectory(s.spec, MotionSpec::none()));
    Outcome o;
    for (auto [a, b] : {std::pair<std::size_t, std::size_t>{35, 39}, {55, 59}}) {
      const double pre = pairwise_ncc(s.moving.cine, a, b).mean;
      const double post = pairwise_ncc(r.corrected, a, b).mean;
      const double ref = pairwise_ncc(still.cine, a, b).mean;
      o.check(post > pre, fmt("frames %zu-%zu: post %.4f > pre %.4f", a, b, post, pre));
      o.check(post >= kNccStillFraction * ref,
              fmt("frames %zu-%zu: post %.4f >= %.1f x motionless %.4f", a, b, post, kNccStillFraction, ref));
    }
    report("2", "NCC improvement", o, all);
  }

  {
    // ROI drawn on the peak-enhancement frame of the uncorrected cine.
    std::size_t peak = 0;
    double best = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = lognormal_model(s.spec.lesion.params(), s.moving.cine.times()[i]);
      if (v > best) {
        best = v;
        peak = i;
      }
    }
    const double norm = global_max(s.moving.cine);
    const Mask3& roi_pre = s.moving.lesion_masks[peak];
    const Mask3 roi_post = apply_correction(roi_pre, r.corrections[peak]);
    const LognormalFit f0 = fit_lognormal(extract_tic(s.moving.cine, roi_pre, norm));
    const LognormalFit f1 = fit_lognormal(extract_tic(r.corrected, roi_post, norm));
    const double mu = s.spec.lesion.mu, sigma = s.spec.lesion.sigma;
    Outcome o;
    o.notes.push_back(fmt("ROI from frame %zu", peak));
    o.check(f1.rmse < f0.rmse, fmt("RMSE %.5f -> %.5f", f0.rmse, f1.rmse));
    o.check(f1.r_squared > f0.r_squared, fmt("R^2 %.5f -> %.5f", f0.r_squared, f1.r_squared));
    o.check(std::abs(f1.params.mu - mu) <= kKineticsRelTol * mu,
            fmt("post mu %.4f within 10%% of %.2f", f1.params.mu, mu));
    o.check(std::abs(f1.params.sigma - sigma) <= kKineticsRelTol * sigma,
            fmt("post sigma %.4f within 10%% of %.2f", f1.params.sigma, sigma));
    report("3", "TIC improvement", o, all);
  }
}

// ------------------------------------------------------------ criterion 4

void criterion_4(bool& all) {
  PhantomSpec spec;
  spec.dims = {64, 64, 64};
  spec.texture_sigma_voxels = 1.5;
  spec.lesion_center = spec.geometry().extent() * 0.5;
  spec.lesion_radii = Vec3::Constant(10.0);
  const Volume3 ref = phantom_texture(spec);
  // Registration region clear of the zero-padded border of the warped copy.
  const Mask3 mask = lesion_mask(spec, 8.0);
  const Vec3 centre = spec.lesion_center;

  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Outcome o;
  double worst_t = 0.0, worst_l = 0.0;
  int failures = 0;
  for (int k = 0; k < 20; ++k) {
    Mat3 linear = Mat3::Identity();
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) linear(i, j) += 0.05 * u(rng);
    const Vec3 shift(4.0 * u(rng), 4.0 * u(rng), 4.0 * u(rng));
    const AffineTransform applied = AffineTransform::about_center(linear, centre, shift);
    const Volume3 flt = resample(ref, SpatialMapping{applied, Interpolation::cubic, 0.0f});
    const AffineTransform got = affine_register(ref, flt, &mask, AffineRegConfig{});
    const AffineTransform expect = applied.inverse();
    const double dl = (got.linear() - expect.linear()).cwiseAbs().maxCoeff();
    // Translation compared where the region sits, in voxels per axis.
    const double dt = (got.apply(centre) - expect.apply(centre)).cwiseQuotient(spec.spacing).cwiseAbs().maxCoeff();
    worst_t = std::max(worst_t, dt);
    worst_l = std::max(worst_l, dl);
    if (dt > kTranslationTolVoxels || dl > kLinearTol) ++failures;
  }
  o.check(failures == 0, fmt("%d of 20 random affines outside tolerance", failures));
  o.check(worst_t <= kTranslationTolVoxels, fmt("worst translation error %.4f voxels", worst_t));
  o.check(worst_l <= kLinearTol, fmt("worst linear entry error %.5f", worst_l));

  // LTS with 10% gross outliers among noisy correspondences.
  int lts_failures = 0;
  double lts_worst_t = 0.0, lts_worst_l = 0.0;
  for (int k = 0; k < 20; ++k) {
    Mat3 linear = Mat3::Identity();
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) linear(i, j) += 0.05 * u(rng);
    const AffineTransform truth(linear, Vec3(4.0 * u(rng), 4.0 * u(rng), 4.0 * u(rng)));
    std::vector<BlockCorrespondence> corr;
    for (int z = 0; z < 6; ++z)
      for (int y = 0; y < 6; ++y)
        for (int x = 0; x < 6; ++x) {
          BlockCorrespondence c;
          c.ref_center = Vec3(8.0 + 8.0 * x, 8.0 + 8.0 * y, 8.0 + 8.0 * z);
          c.matched_center = truth.apply(c.ref_center) + Vec3(u(rng), u(rng), u(rng)) * 0.05;
          c.score = 1.0;
          corr.push_back(c);
        }
    std::vector<std::size_t> order(corr.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i = 0; i < corr.size() / 10; ++i)
      corr[order[i]].matched_center += Vec3(u(rng), u(rng), u(rng)) * 20.0;
    const AffineTransform fit = lts_fit_affine(corr, 0.10);
    const Vec3 mid(28.0, 28.0, 28.0);
    const double dt = (fit.apply(mid) - truth.apply(mid)).cwiseAbs().maxCoeff();
    const double dl = (fit.linear() - truth.linear()).cwiseAbs().maxCoeff();
    lts_worst_t = std::max(lts_worst_t, dt);
    lts_worst_l = std::max(lts_worst_l, dl);
    if (dt > kTranslationTolVoxels || dl > kLinearTol) ++lts_failures;
  }
  o.check(lts_failures == 0, fmt("LTS with 10%% outliers: %d of 20 fits outside tolerance (worst %.4f mm, %.5f)",
                                 lts_failures, lts_worst_t, lts_worst_l));
  report("4", "affine recovery oracle", o, all);
}

// ------------------------------------------------------------ criterion 5

void criterion_5(bool& all) {
  Outcome o;
  const int n = 48;
  for (std::uint64_t seed : {1, 2, 3}) {
    PhantomSpec spec = dceus::testing::texture_spec(n, 1.5, seed);
    spec.lesion_radii = Vec3::Constant(n / 4.0);
    const Volume3 ref = phantom_texture(spec);
    const Mask3 mask = lesion_mask(spec);
    BSplineGrid truth = BSplineGrid::create(ref.geometry(), Vec3::Constant(n / 4.0));
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (auto& c : truth.coefficients)
      for (double& v : c) v = u(rng);
    const double peak = evaluate_field(truth).max_norm();
    for (auto& c : truth.coefficients)
      for (double& v : c) v *= 3.0 / peak;
    const Volume3 flt = resample(ref, SpatialMapping{evaluate_field(truth), Interpolation::cubic, 0.0f});
    const FfdResult r = ffd_register(ref, flt, std::nullopt, &mask, FfdConfig{});

    const Geometry& g = ref.geometry();
    std::vector<double> tre;
    for (int z = 0; z < n; ++z)
      for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
          if (!mask(x, y, z)) continue;
          const Vec3 p = g.to_physical(x, y, z);
          // flt(y) = ref(y + v(y)); the aligning displacement solves u(p) = -v(p + u(p)).
          Vec3 want = Vec3::Zero();
          for (int it = 0; it < 60; ++it) want = -truth.displacement_at(p + want);
          tre.push_back((r.grid.displacement_at(p) - want).norm());
        }
    std::sort(tre.begin(), tre.end());
    const double median = tre[tre.size() / 2], worst = tre.back();
    const double det = min_jacobian_determinant(r.grid);
    o.check(median < kTreMedianVoxels && worst < kTreMaxVoxels && det > 0.0,
            fmt("seed %llu: max warp 3.00 voxels, TRE median %.3f, max %.3f voxels, min det J %.3f",
                static_cast<unsigned long long>(seed), median, worst, det));
  }
  report("5", "FFD recovery oracle", o, all);
}

// ------------------------------------------------------------ criterion 6

void criterion_6(bool& all) {
  Outcome o;
  const auto a = dceus::testing::check_intensity_gradient(16, kGradientProbes, kGradientRelTol, 11);
  o.check(a.failures == 0, fmt("intensity space, 16^3: %d probes, worst relative error %.2e", a.probes, a.worst));
  const auto b = dceus::testing::check_control_gradient(16, kGradientProbes, kGradientRelTol, 12, 0.0, 0.0);
  o.check(b.failures == 0, fmt("control points, NMI only, 16^3: %d probes, worst %.2e", b.probes, b.worst));
  const auto c = dceus::testing::check_control_gradient(16, kGradientProbes, kGradientRelTol, 13, 0.3, 0.1);
  o.check(c.failures == 0, fmt("control points, full objective, 16^3: %d probes, worst %.2e", c.probes, c.worst));
  report("6", "gradient checks", o, all);
}

// ------------------------------------------------------------ criterion 7

void criterion_7_determinism(bool& all) {
  Outcome o;
  double seconds = 0.0;
  const CorrectionResult base = correct(1, &seconds);
  o.notes.push_back(fmt("jobs 1: %.1f s", seconds));
  for (int jobs : {2, 4, 8}) {
    const CorrectionResult r = correct(jobs, &seconds);
    bool same = r.corrected == base.corrected;
    for (std::size_t g = 0; g < base.report.window_affines.size(); ++g)
      same = same && r.report.window_affines[g].max_abs_difference(base.report.window_affines[g]) == 0.0;
    o.check(same, fmt("jobs %d bit-identical to jobs 1 (%.1f s)", jobs, seconds));
  }
  report("7d", "determinism across parallelism", o, all);
}

void criterion_7_speedup(bool& all) {
  Outcome o;
  double t1 = 0.0, t4 = 0.0;
  correct(1, &t1);
  correct(4, &t4);
  const double speedup = t1 / t4;
  o.check(speedup >= kSpeedupFloor, fmt("jobs 1 %.1f s, jobs 4 %.1f s, speedup %.2fx >= %.1fx on %u hardware threads",
                                        t1, t4, speedup, kSpeedupFloor, std::thread::hardware_concurrency()));
  report("7s", "parallel speedup", o, all);
}

// ------------------------------------------------------------ criterion 8

bool same_bits(std::span<const float> a, std::span<const float> b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

void criterion_8(bool& all) {
  Outcome o;

  {
    PhantomSpec spec;
    spec.dims = {40, 40, 28};
    spec.lesion_center = Vec3(19.5, 19.5, 13.5);
    spec.lesion_radii = Vec3(7.0, 6.0, 5.0);
    spec.duration = 16.0;
    spec.frame_rate = 1.5;
    spec.lesion.t0 = 3.0;
    spec.lesion.mu = 1.5;
    spec.background.t0 = 4.0;
    spec.background.mu = 1.8;
    MotionSpec motion;
    motion.amplitude_voxels = 2.0;
    motion.step_frame = 12;
    const PhantomCine ph = generate_phantom_cine(spec, make_trajectory(spec, motion));
    PipelineConfig cfg;
    cfg.window_size = 4;
    cfg.baseline_frame_count = 3;
    const CorrectionResult r = motion_correct(ph.cine, nullptr, cfg);
    const std::size_t s = r.report.start.frame;
    o.check(r.corrected.frame_count() == ph.cine.frame_count() && r.corrected.geometry() == ph.cine.geometry() &&
                r.corrected.times() == ph.cine.times(),
            fmt("corrected cine keeps %zu frames, geometry and timestamps", ph.cine.frame_count()));
    bool identical = s > 0;
    for (std::size_t i = 0; i < s; ++i)
      identical = identical && same_bits(r.corrected.frame(i).data(), ph.cine.frame(i).data());
    o.check(identical, fmt("%zu pre-injection frames bit-identical", s));
  }

  {
    dceus::testing::TempDir dir("acceptance");
    std::mt19937 rng(9);
    std::vector<Volume3> frames;
    Geometry g;
    g.dims = {13, 11, 7};
    // Header fields are float32, so the grid uses float-exact spacings.
    g.spacing = Vec3(0.75, 1.25, 2.125);
    g.origin = Vec3(-4.0, 3.5, 10.0);
    for (int f = 0; f < 3; ++f) {
      Volume3 v(g);
      for (std::size_t i = 0; i < v.size(); ++i) {
        // Arbitrary finite bit patterns, subnormals and signed zero included.
        float x;
        do {
          const std::uint32_t bits = rng();
          std::memcpy(&x, &bits, sizeof x);
        } while (!std::isfinite(x));
        v[i] = x;
      }
      v[0] = -0.0f;
      v[1] = std::numeric_limits<float>::denorm_min();
      frames.push_back(std::move(v));
    }
    bool exact = true;
    for (const char* name : {"v.nii", "v.nii.gz"}) {
      save(frames[0], dir.file(name));
      exact = exact && same_bits(load_volume(dir.file(name)).data(), frames[0].data());
    }
    const Cine4 cine = Cine4::uniform(frames, 2.0);
    for (const char* name : {"c.nii", "c.nii.gz"}) {
      save(cine, dir.file(name));
      const Cine4 back = load_cine(dir.file(name));
      exact = exact && back.frame_count() == 3 && back.geometry() == g && back.times() == cine.times();
      for (std::size_t f = 0; f < 3 && exact; ++f) exact = same_bits(back.frame(f).data(), frames[f].data());
    }
    o.check(exact, "float32 NIfTI round trip bit-exact (.nii, .nii.gz, 3D and 4D)");
  }

  {
    int cases = 0, violations = 0, over_cap = 0;
    for (std::size_t len = 3; len <= 200; ++len)
      for (int w = 3; w <= 6; ++w) {
        ++cases;
        const std::size_t start = 5;
        const auto ww = static_cast<std::size_t>(w);
        if (len < ww) {
          bool threw = false;
          try {
            plan_windows(start + len, start, w);
          } catch (const StartDetectionError&) {
            threw = true;
          }
          if (!threw) ++violations;
          continue;
        }
        const WindowPlan p = plan_windows(start + len, start, w);
        const std::size_t count = len / ww, rem = len % ww;
        bool ok = p.windows.size() == count;
        std::size_t expect = start, prev = 0, enlarged = 0;
        for (auto [b, e] : p.windows) {
          const std::size_t size = e - b;
          ok = ok && b == expect && size >= ww && size >= prev;
          if (rem <= count) ok = ok && size <= ww + 1;
          if (size > ww + 1) ++over_cap;
          if (size > ww) ++enlarged;
          prev = size;
          expect = e;
        }
        ok = ok && expect == start + len;
        if (ok && !p.windows.empty())
          ok = (p.windows.back().second - p.windows.back().first) - (p.windows.front().second - p.windows.front().first) <= 1;
        if (rem <= count) ok = ok && enlarged == rem;
        if (!ok) ++violations;
      }
    o.check(violations == 0,
            fmt("window planner: %d (N-s, w) cases, %d violations (coverage, contiguity, count, sizes w or w+1 "
                "where the remainder fits; %d windows above w+1 where it cannot)",
                cases, violations, over_cap));
  }
  report("8", "structural invariants", o, all);
}

// ------------------------------------------------------------ criterion 9

void criterion_9(bool& all) {
  Outcome o;
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(0.0, 1.0);

  {
    int bad = 0;
    double worst = 0.0;
    const int fits = 200;
    for (int k = 0; k < fits; ++k) {
      const LognormalParams p{2.0 + 6.0 * u(rng), 2.0 + 1.5 * u(rng), 0.3 + 0.6 * u(rng), 20.0 + 150.0 * u(rng),
                              0.05 * u(rng)};
      const double noise = 0.002 + 0.03 * u(rng);
      NormalStream z(1000 + k);
      std::vector<double> t, y;
      for (int i = 0; i < 90; ++i) {
        t.push_back(i);
        y.push_back(lognormal_model(p, i) + noise * z.next());
      }
      const LognormalFit f = fit_lognormal(t, y);
      double sse = 0.0, mean = 0.0, sst = 0.0;
      for (double v : y) mean += v;
      mean /= static_cast<double>(y.size());
      for (std::size_t i = 0; i < y.size(); ++i) {
        const double r = y[i] - lognormal_model(f.params, t[i]);
        sse += r * r;
        sst += (y[i] - mean) * (y[i] - mean);
      }
      const double rmse = std::sqrt(sse / static_cast<double>(y.size()));
      const double r2 = 1.0 - sse / sst;
      const double err = std::max({std::abs(f.sse - sse) / sse, std::abs(f.rmse - rmse) / rmse,
                                   std::abs(f.r_squared - r2)});
      worst = std::max(worst, err);
      if (err > 1e-10 || f.samples != y.size()) ++bad;
    }
    o.check(bad == 0, fmt("%d fits: SSE/RMSE/R^2 recomputed, %d inconsistent (worst %.1e)", fits, bad, worst));
  }

  {
    const Geometry g = dceus::testing::cube(12);
    int bad = 0;
    for (int k = 0; k < 1000; ++k) {
      const double pa = 0.05 + 0.9 * u(rng), pb = 0.05 + 0.9 * u(rng);
      Mask3 a(g), b(g);
      for (std::size_t i = 0; i < a.size(); ++i) {
        a.set(i, u(rng) < pa);
        b.set(i, u(rng) < pb);
      }
      if (a.empty() || b.empty()) continue;
      std::size_t inter = 0, uni = 0;
      for (std::size_t i = 0; i < a.size(); ++i) {
        inter += a[i] && b[i];
        uni += a[i] || b[i];
      }
      const double jab = jaccard(a, b), jba = jaccard(b, a);
      const bool ok = jab == jba && jab >= 0.0 && jab <= 1.0 && jaccard(a, a) == 1.0 &&
                      std::abs(jab - static_cast<double>(inter) / static_cast<double>(uni)) < 1e-15;
      if (!ok) ++bad;
    }
    o.check(bad == 0, fmt("1000 random mask pairs: symmetry, bounds, self = 1, count identity; %d violations", bad));
  }

  {
    const int bins = 16;
    JointHistogram self, indep;
    self.bins = indep.bins = bins;
    self.counts.assign(bins * bins, 0.0);
    indep.counts.assign(bins * bins, 0.0);
    std::vector<double> pr(bins), pf(bins);
    for (int i = 0; i < bins; ++i) {
      pr[i] = 1.0 + u(rng);
      pf[i] = 1.0 + u(rng);
    }
    for (int r = 0; r < bins; ++r) {
      self.at(r, r) = pr[r];
      for (int f = 0; f < bins; ++f) indep.at(r, f) = pr[r] * pf[f];
    }
    self.total = std::accumulate(self.counts.begin(), self.counts.end(), 0.0);
    indep.total = std::accumulate(indep.counts.begin(), indep.counts.end(), 0.0);
    const double a = nmi(self), b = nmi(indep);
    o.check(std::abs(a - 2.0) <= kIdentityTol, fmt("NMI(self) = %.12f", a));
    o.check(std::abs(b - 1.0) <= kIdentityTol, fmt("NMI(independent) = %.12f", b));
  }
  report("9", "metric identities", o, all);
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_level(spdlog::level::warn);
  const std::vector<std::pair<std::string, std::function<void(bool&)>>> all_criteria{
      {"1-3", criteria_1_to_3}, {"4", criterion_4},  {"5", criterion_5}, {"6", criterion_6},
      {"7d", criterion_7_determinism}, {"7s", criterion_7_speedup}, {"8", criterion_8}, {"9", criterion_9}};
  std::set<std::string> chosen(argv + 1, argv + argc);
  for (const std::string& c : chosen) {
    if (std::none_of(all_criteria.begin(), all_criteria.end(), [&](const auto& e) { return e.first == c; })) {
      std::fprintf(stderr, "unknown criterion '%s' (1-3, 4, 5, 6, 7d, 7s, 8, 9)\n", c.c_str());
      return 2;
    }
  }
  bool ok = true;
  for (const auto& [id, run] : all_criteria) {
    if (!chosen.empty() && !chosen.count(id)) continue;
    try {
      run(ok);
    } catch (const std::exception& e) {
      std::printf("[FAIL] criterion %s: threw %s\n", id.c_str(), e.what());
      ok = false;
    }
  }
  return ok ? 0 : 1;
}
