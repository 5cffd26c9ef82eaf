// Command-line front end: correct, evaluate, simulate, register-pair, info.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "dceus/affine_reg.hpp"
#include "dceus/evaluation.hpp"
#include "dceus/ffd_reg.hpp"
#include "dceus/nifti.hpp"
#include "dceus/phantom.hpp"
#include "dceus/pipeline.hpp"
#include "dceus/serialize.hpp"

#ifndef DCEUS_VERSION
#define DCEUS_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using namespace dceus;

namespace {

enum Exit : int {
  kOk = 0,
  kInternal = 1,
  kUsage = 2,
  kIo = 3,
  kFormat = 4,
  kStart = 5,
  kRegistration = 6,
  kInput = 7,
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

/// "a.nii.gz" -> "a", "b.nii" -> "b".
std::string strip_nifti_ext(const std::string& path) {
  for (const char* ext : {".nii.gz", ".nii"}) {
    const std::string e(ext);
    if (path.size() > e.size() && path.compare(path.size() - e.size(), e.size(), e) == 0)
      return path.substr(0, path.size() - e.size());
  }
  return path;
}

void require_file(const std::string& path) {
  if (!fs::exists(path)) throw IoError("no such file: '" + path + "'");
}

void ensure_parent(const std::string& path) {
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

Json base_manifest(const std::string& command) {
  return {{"tool", "dceus_mc"}, {"version", DCEUS_VERSION}, {"command", command}};
}

std::pair<std::size_t, std::size_t> parse_range(const std::string& text) {
  const auto dash = text.find('-');
  if (dash == std::string::npos) throw ConfigError("frame range '" + text + "' must look like 35-39");
  try {
    return {std::stoul(text.substr(0, dash)), std::stoul(text.substr(dash + 1))};
  } catch (const std::exception&) {
    throw ConfigError("frame range '" + text + "' must look like 35-39");
  }
}

// ---------------------------------------------------------------- correct

struct CorrectArgs {
  std::string input;
  std::string mask;
  std::string out;
  std::string config;
  std::string report;
  std::string manifest;
  std::string transforms_dir;
  std::string warp_masks;
  std::string warped_masks_out;
  std::string from_manifest;
  std::optional<double> frame_rate;
  std::optional<int> jobs;
  std::optional<int> window_size;
  std::optional<double> start_factor;
  std::optional<int> baseline_frames;
  bool affine_only = false;
};

void save_stage(const StageMapping& m, const std::string& stem) {
  save_affine(stem + "_affine.txt", m.affine);
  if (m.grid) save_grid(*m.grid, stem + "_grid.nii.gz");
}

int cmd_correct(CorrectArgs a) {
  PipelineConfig cfg;
  if (!a.from_manifest.empty()) {
    const Json m = read_json_file(a.from_manifest);
    try {
      if (a.input.empty()) a.input = m.at("inputs").at("cine").get<std::string>();
      if (a.mask.empty() && m.at("inputs").contains("mask") && !m.at("inputs").at("mask").is_null())
        a.mask = m.at("inputs").at("mask").get<std::string>();
      if (a.out.empty()) a.out = m.at("outputs").at("cine").get<std::string>();
      if (!a.frame_rate && m.at("inputs").contains("frame_rate") && !m.at("inputs").at("frame_rate").is_null())
        a.frame_rate = m.at("inputs").at("frame_rate").get<double>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("manifest '" + a.from_manifest + "': " + e.what());
    }
    cfg = pipeline_config_from_json(m.at("config"));
  }
  if (a.input.empty()) throw ConfigError("correct: an input cine is required");
  if (a.out.empty()) throw ConfigError("correct: --out is required");
  if (!a.config.empty()) cfg = pipeline_config_from_json(read_json_file(a.config), cfg);
  if (a.jobs) cfg.parallelism = *a.jobs;
  if (a.window_size) cfg.window_size = *a.window_size;
  if (a.start_factor) cfg.start_threshold_factor = *a.start_factor;
  if (a.baseline_frames) cfg.baseline_frame_count = *a.baseline_frames;
  if (a.affine_only) cfg.nonrigid = false;
  cfg.validate();

  require_file(a.input);
  const auto t0 = Clock::now();
  const NiftiHeaderView header = read_nifti_header(a.input);
  const Cine4 cine = load_cine(a.input, a.frame_rate);
  std::optional<Mask3> mask;
  if (!a.mask.empty()) {
    require_file(a.mask);
    mask = load_mask(a.mask);
  }
  spdlog::info("loaded {} frames of {}x{}x{}", cine.frame_count(), cine.geometry().dims[0],
               cine.geometry().dims[1], cine.geometry().dims[2]);

  const CorrectionResult result = motion_correct(cine, mask ? &*mask : nullptr, cfg);

  const std::string stem = strip_nifti_ext(a.out);
  const std::string report_path = a.report.empty() ? stem + "_report.json" : a.report;
  const std::string manifest_path = a.manifest.empty() ? stem + "_manifest.json" : a.manifest;
  ensure_parent(a.out);
  save(result.corrected, a.out, NiftiType::float32, &header.orientation);
  ensure_parent(report_path);
  write_json_file(report_path, to_json(result.report));

  if (!a.transforms_dir.empty()) {
    fs::create_directories(a.transforms_dir);
    for (std::size_t i = 0; i < result.corrections.size(); ++i) {
      const auto& c = result.corrections[i];
      const std::string base = (fs::path(a.transforms_dir) / ("frame_" + std::to_string(i))).string();
      if (c.first) save_stage(*c.first, base + "_pass1");
      if (c.second) save_stage(*c.second, base + "_pass2");
    }
  }
  if (!a.warp_masks.empty()) {
    require_file(a.warp_masks);
    const std::vector<Mask3> masks = load_mask_sequence(a.warp_masks);
    if (masks.size() != cine.frame_count())
      throw InputError("--warp-masks has " + std::to_string(masks.size()) + " frames, cine has " +
                       std::to_string(cine.frame_count()));
    std::vector<Mask3> warped;
    for (std::size_t i = 0; i < masks.size(); ++i) warped.push_back(apply_correction(masks[i], result.corrections[i]));
    const std::string out = a.warped_masks_out.empty() ? stem + "_masks.nii.gz" : a.warped_masks_out;
    ensure_parent(out);
    save_mask_sequence(warped, out, &header.orientation);
  }

  Json manifest = base_manifest("correct");
  manifest["inputs"] = {{"cine", a.input},
                        {"mask", a.mask.empty() ? Json() : Json(a.mask)},
                        {"frame_rate", a.frame_rate ? Json(*a.frame_rate) : Json()}};
  manifest["outputs"] = {{"cine", a.out}, {"report", report_path}};
  manifest["config"] = to_json(cfg);
  manifest["seed"] = nullptr;
  manifest["timings_s"] = {{"total", seconds_since(t0)}};
  ensure_parent(manifest_path);
  write_json_file(manifest_path, manifest);

  std::printf("start frame %zu, %zu windows, %zu warnings\n", result.report.start.frame,
              result.report.plan.windows.size(), result.report.warnings.size());
  std::printf("wrote %s\n", a.out.c_str());
  return kOk;
}

// ---------------------------------------------------------------- evaluate

struct EvaluateArgs {
  std::string pre;
  std::string post;
  std::string pre_masks;
  std::string post_masks;
  std::string roi;
  std::string roi_pre;
  std::string roi_post;
  std::string ncc_mask;
  std::vector<std::string> ranges;
  std::size_t start = 0;
  std::optional<double> frame_rate;
  std::string csv;
  std::string json;
  std::string tic_csv;
};

double display_max_for(const std::string& path, const Cine4& cine) {
  return read_nifti_header(path).datatype == NiftiType::uint8 ? 255.0 : global_max(cine);
}

int cmd_evaluate(const EvaluateArgs& a) {
  require_file(a.pre);
  require_file(a.post);
  const Cine4 pre = load_cine(a.pre, a.frame_rate);
  const Cine4 post = load_cine(a.post, a.frame_rate);
  require_same_grid(pre.geometry(), post.geometry(), "evaluate pre/post");
  if (pre.frame_count() != post.frame_count())
    throw GeometryError("evaluate: pre has " + std::to_string(pre.frame_count()) + " frames, post has " +
                        std::to_string(post.frame_count()));

  struct Row {
    std::string metric;
    double pre, post;
  };
  std::vector<Row> rows;
  Json summary = Json::object();

  if (!a.pre_masks.empty() || !a.post_masks.empty()) {
    if (a.pre_masks.empty() || a.post_masks.empty())
      throw ConfigError("evaluate: overlap needs both --pre-masks and --post-masks");
    const auto pm = load_mask_sequence(a.pre_masks);
    const auto qm = load_mask_sequence(a.post_masks);
    if (pm.size() != pre.frame_count() || qm.size() != pre.frame_count())
      throw InputError("evaluate: mask sequences must have one mask per frame");
    if (a.start >= pm.size()) throw InputError("evaluate: --start beyond the last frame");
    std::vector<std::size_t> idx;
    for (std::size_t i = a.start; i < pm.size(); ++i) idx.push_back(i);
    const auto o0 = pairwise_overlap(std::span(pm).subspan(a.start), idx);
    const auto o1 = pairwise_overlap(std::span(qm).subspan(a.start), idx);
    rows.push_back({"overlap_jaccard_pct_mean", 100.0 * o0.mean, 100.0 * o1.mean});
    rows.push_back({"overlap_jaccard_pct_stdev", 100.0 * o0.stdev, 100.0 * o1.stdev});
    summary["overlap"] = {{"definition", "Jaccard |A∩B|/|A∪B|, percent, all frame pairs from start"},
                          {"start", a.start},
                          {"pre", {{"mean", 100.0 * o0.mean}, {"stdev", 100.0 * o0.stdev}}},
                          {"post", {{"mean", 100.0 * o1.mean}, {"stdev", 100.0 * o1.stdev}}}};
  }

  std::optional<Mask3> ncc_mask;
  if (!a.ncc_mask.empty()) ncc_mask = load_mask(a.ncc_mask);
  Json ncc = Json::array();
  for (const auto& r : a.ranges) {
    const auto [lo, hi] = parse_range(r);
    const auto n0 = pairwise_ncc(pre, lo, hi, ncc_mask ? &*ncc_mask : nullptr);
    const auto n1 = pairwise_ncc(post, lo, hi, ncc_mask ? &*ncc_mask : nullptr);
    rows.push_back({"ncc_" + r + "_mean", n0.mean, n1.mean});
    rows.push_back({"ncc_" + r + "_stdev", n0.stdev, n1.stdev});
    ncc.push_back({{"range", r},
                   {"pairs", n0.pairs},
                   {"pre", {{"mean", n0.mean}, {"stdev", n0.stdev}}},
                   {"post", {{"mean", n1.mean}, {"stdev", n1.stdev}}}});
  }
  if (!ncc.empty()) summary["ncc"] = ncc;

  const std::string roi_pre = a.roi_pre.empty() ? a.roi : a.roi_pre;
  const std::string roi_post = a.roi_post.empty() ? a.roi : a.roi_post;
  if (!roi_pre.empty() || !roi_post.empty()) {
    if (roi_pre.empty() || roi_post.empty()) throw ConfigError("evaluate: TIC needs an roi for both cines");
    const double norm = display_max_for(a.pre, pre);
    const auto t0 = extract_tic(pre, load_mask(roi_pre), norm);
    const auto t1 = extract_tic(post, load_mask(roi_post), norm);
    const auto f0 = fit_lognormal(t0);
    const auto f1 = fit_lognormal(t1);
    rows.push_back({"tic_sse", f0.sse, f1.sse});
    rows.push_back({"tic_rmse", f0.rmse, f1.rmse});
    rows.push_back({"tic_r_squared", f0.r_squared, f1.r_squared});
    auto fit_json = [](const LognormalFit& f) {
      return Json{{"t0", f.params.t0}, {"mu", f.params.mu},       {"sigma", f.params.sigma},
                  {"scale", f.params.scale}, {"offset", f.params.offset}, {"sse", f.sse},
                  {"rmse", f.rmse}, {"r_squared", f.r_squared}, {"converged", f.converged}};
    };
    summary["tic"] = {{"normalization", norm}, {"pre", fit_json(f0)}, {"post", fit_json(f1)}};
    if (!a.tic_csv.empty()) {
      ensure_parent(a.tic_csv);
      std::ofstream out(a.tic_csv);
      if (!out) throw IoError("cannot write '" + a.tic_csv + "'");
      out.precision(10);
      out << "time_s,pre,post,pre_fit,post_fit\n";
      for (std::size_t i = 0; i < t0.times.size(); ++i)
        out << t0.times[i] << ',' << t0.intensities[i] << ',' << t1.intensities[i] << ','
            << lognormal_model(f0.params, t0.times[i]) << ',' << lognormal_model(f1.params, t0.times[i]) << '\n';
    }
  }
  if (rows.empty()) throw ConfigError("evaluate: nothing to compute (give masks, --ncc-range or an roi)");

  std::ostringstream csv;
  csv.precision(10);
  csv << "metric,pre,post,delta\n";
  for (const auto& r : rows) csv << r.metric << ',' << r.pre << ',' << r.post << ',' << (r.post - r.pre) << '\n';
  std::cout << csv.str();
  if (!a.csv.empty()) {
    ensure_parent(a.csv);
    std::ofstream out(a.csv);
    if (!out) throw IoError("cannot write '" + a.csv + "'");
    out << csv.str();
  }
  if (!a.json.empty()) {
    ensure_parent(a.json);
    write_json_file(a.json, summary);
  }
  return kOk;
}

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
  std::string preset = "respiratory";
  std::optional<std::uint64_t> seed;
  std::string out_dir = "phantom";
  std::string spec;
  std::string motion;
  int jobs = 1;
  bool motionless = false;
};

void preset(const std::string& name, PhantomSpec& spec, MotionSpec& motion) {
  if (name == "respiratory") return;
  if (name == "static") {
    motion = MotionSpec::none();
    return;
  }
  if (name == "small") {
    spec.dims = {48, 48, 32};
    spec.lesion_center = Vec3(23.5, 23.5, 15.5);
    spec.lesion_radii = Vec3(8.0, 7.0, 6.0);
    spec.duration = 30.0;
    motion.amplitude_voxels = 2.0;
    motion.drift_voxels = 1.0;
    motion.step_voxels = 2.0;
    motion.step_frame = 20;
    return;
  }
  throw ConfigError("unknown preset '" + name + "' (respiratory, static, small)");
}

int cmd_simulate(const SimulateArgs& a) {
  PhantomSpec spec;
  MotionSpec motion;
  preset(a.preset, spec, motion);
  if (!a.spec.empty()) spec = phantom_spec_from_json(read_json_file(a.spec), spec);
  if (!a.motion.empty()) motion = motion_spec_from_json(read_json_file(a.motion), motion);
  if (a.seed) spec.seed = *a.seed;
  spec.validate();

  const auto t0 = Clock::now();
  const MotionTrajectory traj = make_trajectory(spec, motion);
  const PhantomCine ph = generate_phantom_cine(spec, traj, a.jobs);
  fs::create_directories(a.out_dir);
  auto path = [&](const char* name) { return (fs::path(a.out_dir) / name).string(); };
  save(ph.cine, path("cine.nii.gz"));
  save_mask_sequence(ph.lesion_masks, path("masks.nii.gz"));
  const Mask3 lesion = lesion_mask(spec);
  save(lesion, path("lesion.nii.gz"));
  save(lesion_mask(spec, 8.0), path("roi.nii.gz"));
  write_json_file(path("trajectory.json"), to_json(traj));
  write_json_file(path("phantom.json"), {{"spec", to_json(spec)}, {"motion", to_json(motion)}});
  if (a.motionless) {
    const PhantomCine still = generate_phantom_cine(spec, make_trajectory(spec, MotionSpec::none()), a.jobs);
    save(still.cine, path("cine_motionless.nii.gz"));
  }
  {
    const TimeIntensityCurve tic = expected_tic(spec, lesion, global_max(ph.cine));
    std::ofstream out(path("expected_tic.csv"));
    if (!out) throw IoError("cannot write '" + path("expected_tic.csv") + "'");
    out.precision(10);
    out << "time_s,intensity\n";
    for (std::size_t i = 0; i < tic.times.size(); ++i) out << tic.times[i] << ',' << tic.intensities[i] << '\n';
  }
  Json manifest = base_manifest("simulate");
  manifest["preset"] = a.preset;
  manifest["seed"] = spec.seed;
  manifest["config"] = {{"spec", to_json(spec)}, {"motion", to_json(motion)}};
  manifest["outputs"] = {{"dir", a.out_dir}};
  manifest["timings_s"] = {{"total", seconds_since(t0)}};
  write_json_file(path("manifest.json"), manifest);
  std::printf("wrote %zu frames to %s\n", ph.cine.frame_count(), a.out_dir.c_str());
  return kOk;
}

// ---------------------------------------------------------------- register-pair

struct PairArgs {
  std::string ref;
  std::string flt;
  std::string mask;
  std::string out;
  std::string transform;
  std::string grid;
  std::string config;
  bool affine_only = false;
};

int cmd_register_pair(const PairArgs& a) {
  require_file(a.ref);
  require_file(a.flt);
  PipelineConfig cfg;
  if (!a.config.empty()) cfg = pipeline_config_from_json(read_json_file(a.config));
  const Volume3 ref = load_volume(a.ref);
  const Volume3 flt = load_volume(a.flt);
  std::optional<Mask3> mask;
  if (!a.mask.empty()) mask = load_mask(a.mask);
  const Mask3* m = mask ? &*mask : nullptr;

  const AffineTransform t = affine_register(ref, flt, m, cfg.affine);
  const Vec3 shift = t.offset().cwiseQuotient(ref.geometry().spacing);
  std::printf("affine (mm, pull-back ref -> flt):\n");
  for (int r = 0; r < 3; ++r)
    std::printf("  %12.6f %12.6f %12.6f %12.6f\n", t.matrix()(r, 0), t.matrix()(r, 1), t.matrix()(r, 2),
                t.matrix()(r, 3));
  std::printf("translation (voxels): %.4f %.4f %.4f\n", shift[0], shift[1], shift[2]);
  if (!a.transform.empty()) save_affine(a.transform, t);

  SpatialMapping mapping{t, cfg.output_interpolation, 0.0f};
  if (!a.affine_only && cfg.nonrigid) {
    const FfdResult r = ffd_register(ref, flt, t, m, cfg.ffd);
    const DenseDisplacementField u = evaluate_field(r.grid);
    std::printf("non-rigid: max %.4f mm, mean %.4f mm, %d iterations%s\n", u.max_norm(), u.mean_norm(),
                r.iterations, r.converged ? "" : " (not converged)");
    if (!a.grid.empty()) save_grid(r.grid, a.grid);
    mapping.transform = deformation_field(r.grid);
  }
  if (!a.out.empty()) save(resample(flt, mapping), a.out);
  return kOk;
}

// ---------------------------------------------------------------- info

int cmd_info(const std::string& path, std::optional<double> frame_rate) {
  require_file(path);
  const NiftiHeaderView h = read_nifti_header(path);
  const Cine4 cine = [&] {
    if (h.dims[3] > 1) return load_cine(path, frame_rate);
    const Volume3 v = load_volume(path);
    return Cine4({v, v}, {0.0, 1.0});
  }();
  const Geometry& g = cine.geometry();
  std::printf("file        %s\n", path.c_str());
  std::printf("datatype    %d\n", static_cast<int>(h.datatype));
  std::printf("dims        %d x %d x %d\n", g.dims[0], g.dims[1], g.dims[2]);
  std::printf("spacing mm  %.6g %.6g %.6g\n", g.spacing[0], g.spacing[1], g.spacing[2]);
  const std::size_t frames = h.dims[3] > 1 ? cine.frame_count() : 1;
  std::printf("frames      %zu\n", frames);
  if (h.time_step_s > 0.0) std::printf("time step s %.6g\n", h.time_step_s);
  std::printf("\nframe  time_s  mean_intensity\n");
  for (std::size_t i = 0; i < frames; ++i)
    std::printf("%5zu  %6.2f  %.6g\n", i, cine.times()[i], frame_mean_intensity(cine.frame(i)));
  return kOk;
}

template <class F>
int guarded(F&& f) {
  try {
    return f();
  } catch (const ConfigError& e) {
    spdlog::error("configuration: {}", e.what());
    return kUsage;
  } catch (const IoError& e) {
    spdlog::error("i/o: {}", e.what());
    return kIo;
  } catch (const FormatError& e) {
    spdlog::error("format: {}", e.what());
    return kFormat;
  } catch (const StartDetectionError& e) {
    spdlog::error("start detection: {}", e.what());
    return kStart;
  } catch (const DegenerateError& e) {
    spdlog::error("registration: {}", e.what());
    return kRegistration;
  } catch (const GeometryError& e) {
    spdlog::error("geometry: {}", e.what());
    return kInput;
  } catch (const InputError& e) {
    spdlog::error("input: {}", e.what());
    return kInput;
  } catch (const fs::filesystem_error& e) {
    spdlog::error("i/o: {}", e.what());
    return kIo;
  } catch (const std::exception& e) {
    spdlog::error("internal: {}", e.what());
    return kInternal;
  }
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("dceus"));
  spdlog::set_pattern("[%H:%M:%S] %^%l%$ %v");

  CLI::App app{"Two-pass window-based motion correction for 4D contrast ultrasound"};
  app.set_version_flag("--version", DCEUS_VERSION);
  app.require_subcommand(1);
  bool verbose = false, quiet = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging");
  app.add_flag("-q,--quiet", quiet, "Errors only");

  CorrectArgs ca;
  auto* correct = app.add_subcommand("correct", "Motion-correct a 4D cine");
  correct->add_option("input", ca.input, "Input 4D NIfTI cine");
  correct->add_option("--mask", ca.mask, "Registration region (3D mask)");
  correct->add_option("-o,--out", ca.out, "Corrected cine path");
  correct->add_option("-c,--config", ca.config, "JSON pipeline configuration");
  correct->add_option("--report", ca.report, "Report path (default <out>_report.json)");
  correct->add_option("--manifest", ca.manifest, "Manifest path (default <out>_manifest.json)");
  correct->add_option("--transforms-dir", ca.transforms_dir, "Write per-frame affines and lattices here");
  correct->add_option("--warp-masks", ca.warp_masks, "Per-frame mask sequence to carry through the correction");
  correct->add_option("--warped-masks-out", ca.warped_masks_out, "Output for --warp-masks (default <out>_masks.nii.gz)");
  correct->add_option("--from-manifest", ca.from_manifest, "Rerun with the inputs and config of a manifest");
  correct->add_option("--frame-rate", ca.frame_rate, "Frame rate in Hz (overrides the header)");
  correct->add_option("-j,--jobs", ca.jobs, "Concurrent registrations");
  correct->add_option("--window-size", ca.window_size, "Frames per window (3-6)");
  correct->add_option("--start-factor", ca.start_factor, "Start threshold as a multiple of the baseline mean");
  correct->add_option("--baseline-frames", ca.baseline_frames, "Frames averaged for the baseline");
  correct->add_flag("--affine-only", ca.affine_only, "Skip the non-rigid stage");

  EvaluateArgs ea;
  auto* evaluate = app.add_subcommand("evaluate", "Compare a cine before and after correction");
  evaluate->add_option("--pre", ea.pre, "Uncorrected cine")->required();
  evaluate->add_option("--post", ea.post, "Corrected cine")->required();
  evaluate->add_option("--pre-masks", ea.pre_masks, "Per-frame lesion masks of the uncorrected cine");
  evaluate->add_option("--post-masks", ea.post_masks, "Per-frame lesion masks of the corrected cine");
  evaluate->add_option("--start", ea.start, "First frame for the overlap statistics");
  evaluate->add_option("--ncc-range", ea.ranges, "Inclusive frame range such as 35-39 (repeatable)");
  evaluate->add_option("--ncc-mask", ea.ncc_mask, "Restrict NCC to a mask (default whole frame)");
  evaluate->add_option("--roi", ea.roi, "TIC region for both cines");
  evaluate->add_option("--roi-pre", ea.roi_pre, "TIC region for the uncorrected cine");
  evaluate->add_option("--roi-post", ea.roi_post, "TIC region for the corrected cine");
  evaluate->add_option("--frame-rate", ea.frame_rate, "Frame rate in Hz (overrides the header)");
  evaluate->add_option("--csv", ea.csv, "Metrics CSV");
  evaluate->add_option("--json", ea.json, "Metrics JSON");
  evaluate->add_option("--tic-csv", ea.tic_csv, "TIC and fitted curves CSV");

  SimulateArgs sa;
  auto* simulate = app.add_subcommand("simulate", "Write a synthetic phantom cine with ground truth");
  simulate->add_option("--preset", sa.preset, "respiratory, static or small");
  simulate->add_option("--seed", sa.seed, "Random seed");
  simulate->add_option("-o,--out-dir", sa.out_dir, "Output directory");
  simulate->add_option("--spec", sa.spec, "JSON phantom overrides");
  simulate->add_option("--motion", sa.motion, "JSON motion overrides");
  simulate->add_option("-j,--jobs", sa.jobs, "Frames synthesized concurrently");
  simulate->add_flag("--motionless", sa.motionless, "Also write the cine without motion");

  PairArgs pa;
  auto* pair = app.add_subcommand("register-pair", "Affine then non-rigid registration of two volumes");
  pair->add_option("reference", pa.ref, "Reference volume")->required();
  pair->add_option("floating", pa.flt, "Floating volume")->required();
  pair->add_option("--mask", pa.mask, "Registration region");
  pair->add_option("-o,--out", pa.out, "Warped floating volume");
  pair->add_option("--transform", pa.transform, "Affine text file");
  pair->add_option("--grid", pa.grid, "Lattice output (.nii.gz + .json sidecar)");
  pair->add_option("-c,--config", pa.config, "JSON pipeline configuration");
  pair->add_flag("--affine-only", pa.affine_only, "Skip the non-rigid stage");

  std::string info_path;
  std::optional<double> info_rate;
  auto* info = app.add_subcommand("info", "Print geometry and per-frame mean intensity");
  info->add_option("file", info_path, "NIfTI file")->required();
  info->add_option("--frame-rate", info_rate, "Frame rate in Hz");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }
  spdlog::set_level(quiet ? spdlog::level::err : verbose ? spdlog::level::debug : spdlog::level::info);

  if (*correct) return guarded([&] { return cmd_correct(ca); });
  if (*evaluate) return guarded([&] { return cmd_evaluate(ea); });
  if (*simulate) return guarded([&] { return cmd_simulate(sa); });
  if (*pair) return guarded([&] { return cmd_register_pair(pa); });
  if (*info) return guarded([&] { return cmd_info(info_path, info_rate); });
  return kUsage;
}
