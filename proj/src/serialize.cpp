#include "dceus/serialize.hpp"

#include <fstream>
#include <set>

#include "dceus/nifti.hpp"

namespace dceus {

const char* to_string(Interpolation mode) {
  switch (mode) {
    case Interpolation::nearest: return "nearest";
    case Interpolation::linear: return "linear";
    case Interpolation::cubic: return "cubic";
  }
  return "linear";
}

Interpolation interpolation_from_string(const std::string& name) {
  if (name == "nearest") return Interpolation::nearest;
  if (name == "linear") return Interpolation::linear;
  if (name == "cubic") return Interpolation::cubic;
  throw ConfigError("unknown interpolation '" + name + "' (nearest, linear, cubic)");
}

Json to_json(const AffineTransform& t) {
  Json rows = Json::array();
  for (int r = 0; r < 3; ++r) {
    Json row = Json::array();
    for (int c = 0; c < 4; ++c) row.push_back(t.matrix()(r, c));
    rows.push_back(row);
  }
  return rows;
}

AffineTransform affine_from_json(const Json& j) {
  if (!j.is_array() || j.size() != 3) throw FormatError("affine: expected 3 rows");
  Mat34 m;
  for (int r = 0; r < 3; ++r) {
    if (!j[r].is_array() || j[r].size() != 4) throw FormatError("affine: expected 4 columns");
    for (int c = 0; c < 4; ++c) m(r, c) = j[r][c].get<double>();
  }
  return AffineTransform(m);
}

namespace {

Json vec_json(const Vec3& v) { return Json::array({v[0], v[1], v[2]}); }
Json idx_json(const Index3& v) { return Json::array({v[0], v[1], v[2]}); }

/// Reads keys of an object into fields, rejecting unknown names.
class Reader {
 public:
  Reader(const Json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j.is_object()) throw ConfigError(where_ + ": expected a JSON object");
  }
  /// Rejects keys that no get/sub call asked for.
  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError(where_ + ": unknown key '" + it.key() + "'");
  }
  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(where_ + "." + key + ": wrong type");
    }
  }
  void get(const char* key, Vec3& out) {
    std::array<double, 3> a{out[0], out[1], out[2]};
    get(key, a);
    out = Vec3(a[0], a[1], a[2]);
  }
  void get(const char* key, Interpolation& out) {
    std::string s = to_string(out);
    get(key, s);
    out = interpolation_from_string(s);
  }
  const Json* sub(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

 private:
  const Json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

Json to_json(const AffineRegConfig& c) {
  return {{"block_size", c.block_size},
          {"search_radius", c.search_radius},
          {"block_keep_fraction", c.block_keep_fraction},
          {"lts_trim_fraction", c.lts_trim_fraction},
          {"levels", c.levels},
          {"max_outer_iterations", c.max_outer_iterations},
          {"convergence_tol", c.convergence_tol}};
}

Json to_json(const FfdConfig& c) {
  return {{"bins", c.bins},
          {"control_spacing_voxels", c.control_spacing_voxels},
          {"bending_weight", c.bending_weight},
          {"log_jacobian_weight", c.log_jacobian_weight},
          {"levels", c.levels},
          {"max_iterations_per_level", c.max_iterations_per_level},
          {"initial_step_voxels", c.initial_step_voxels},
          {"min_step_voxels", c.min_step_voxels},
          {"objective_tolerance", c.objective_tolerance},
          {"stall_iterations", c.stall_iterations},
          {"interpolation", to_string(c.interpolation)},
          {"range_padding", c.range_padding}};
}

Json to_json(const Kinetics& k) {
  return {{"t0", k.t0}, {"mu", k.mu}, {"sigma", k.sigma}, {"scale", k.scale}, {"offset", k.offset}};
}

void read_kinetics(const Json& j, Kinetics& k, const std::string& where) {
  Reader r(j, where);
  r.get("t0", k.t0);
  r.get("mu", k.mu);
  r.get("sigma", k.sigma);
  r.get("scale", k.scale);
  r.get("offset", k.offset);
  r.finish();
}

Json to_json(const StageSummary& s) {
  Json w = Json::array();
  for (const auto& x : s.warnings) w.push_back(x);
  return {{"status", to_string(s.status)},
          {"affine", to_json(s.affine)},
          {"max_displacement_mm", s.max_displacement_mm},
          {"mean_displacement_mm", s.mean_displacement_mm},
          {"converged", s.converged},
          {"iterations", s.iterations},
          {"warnings", w}};
}

}  // namespace

Json to_json(const PipelineConfig& cfg) {
  Json j{{"window_size", cfg.window_size},
         {"start_threshold_factor", cfg.start_threshold_factor},
         {"baseline_frame_count", cfg.baseline_frame_count},
         {"nonrigid", cfg.nonrigid},
         {"parallelism", cfg.parallelism},
         {"output_interpolation", to_string(cfg.output_interpolation)},
         {"master_weights", nullptr},
         {"affine", to_json(cfg.affine)},
         {"ffd", to_json(cfg.ffd)}};
  if (cfg.master_weights) j["master_weights"] = *cfg.master_weights;
  return j;
}

PipelineConfig pipeline_config_from_json(const Json& j, PipelineConfig cfg) {
  {
    Reader r(j, "config");
    r.get("window_size", cfg.window_size);
    r.get("start_threshold_factor", cfg.start_threshold_factor);
    r.get("baseline_frame_count", cfg.baseline_frame_count);
    r.get("nonrigid", cfg.nonrigid);
    r.get("parallelism", cfg.parallelism);
    r.get("output_interpolation", cfg.output_interpolation);
    if (const Json* w = r.sub("master_weights")) {
      if (w->is_null()) {
        cfg.master_weights.reset();
      } else {
        try {
          cfg.master_weights = w->get<std::vector<double>>();
        } catch (const nlohmann::json::exception&) {
          throw ConfigError("config.master_weights: expected an array of numbers or null");
        }
      }
    }
    if (const Json* a = r.sub("affine")) {
      Reader ra(*a, "config.affine");
      ra.get("block_size", cfg.affine.block_size);
      ra.get("search_radius", cfg.affine.search_radius);
      ra.get("block_keep_fraction", cfg.affine.block_keep_fraction);
      ra.get("lts_trim_fraction", cfg.affine.lts_trim_fraction);
      ra.get("levels", cfg.affine.levels);
      ra.get("max_outer_iterations", cfg.affine.max_outer_iterations);
      ra.get("convergence_tol", cfg.affine.convergence_tol);
      ra.finish();
    }
    if (const Json* f = r.sub("ffd")) {
      Reader rf(*f, "config.ffd");
      rf.get("bins", cfg.ffd.bins);
      rf.get("control_spacing_voxels", cfg.ffd.control_spacing_voxels);
      rf.get("bending_weight", cfg.ffd.bending_weight);
      rf.get("log_jacobian_weight", cfg.ffd.log_jacobian_weight);
      rf.get("levels", cfg.ffd.levels);
      rf.get("max_iterations_per_level", cfg.ffd.max_iterations_per_level);
      rf.get("initial_step_voxels", cfg.ffd.initial_step_voxels);
      rf.get("min_step_voxels", cfg.ffd.min_step_voxels);
      rf.get("objective_tolerance", cfg.ffd.objective_tolerance);
      rf.get("stall_iterations", cfg.ffd.stall_iterations);
      rf.get("interpolation", cfg.ffd.interpolation);
      rf.get("range_padding", cfg.ffd.range_padding);
      rf.finish();
    }
    r.finish();
  }
  cfg.validate();
  return cfg;
}

Json to_json(const CorrectionReport& report) {
  Json windows = Json::array();
  for (std::size_t g = 0; g < report.plan.windows.size(); ++g) {
    windows.push_back({{"index", g},
                       {"first_frame", report.plan.windows[g].first},
                       {"end_frame", report.plan.windows[g].second},
                       {"master_affine", g < report.window_affines.size() ? to_json(report.window_affines[g]) : Json()}});
  }
  Json frames = Json::array();
  for (const auto& f : report.frames) {
    Json e{{"frame", f.frame}, {"window", f.window}, {"status", to_string(f.status)}};
    if (f.first_pass) e["first_pass"] = to_json(*f.first_pass);
    if (f.second_pass) e["second_pass"] = to_json(*f.second_pass);
    frames.push_back(e);
  }
  Json timings = Json::object();
  for (const auto& [k, v] : report.timings_s) timings[k] = v;
  return {{"start_detection",
           {{"frame", report.start.frame},
            {"baseline_mean", report.start.baseline_mean},
            {"threshold_factor", report.start_threshold_factor},
            {"threshold", report.start.threshold},
            {"frame_mean", report.start.frame_mean}}},
          {"window_size", report.plan.nominal_size},
          {"windows", windows},
          {"frames", frames},
          {"warnings", report.warnings},
          {"timings_s", timings}};
}

Json to_json(const PhantomSpec& s) {
  return {{"dims", idx_json(s.dims)},
          {"spacing", vec_json(s.spacing)},
          {"lesion_center", vec_json(s.lesion_center)},
          {"lesion_radii", vec_json(s.lesion_radii)},
          {"texture_sigma_voxels", s.texture_sigma_voxels},
          {"texture_amplitude", s.texture_amplitude},
          {"lesion_kinetics", to_json(s.lesion)},
          {"background_kinetics", to_json(s.background)},
          {"speckle_sigma", s.speckle_sigma},
          {"additive_sigma", s.additive_sigma},
          {"frame_rate", s.frame_rate},
          {"duration", s.duration},
          {"seed", s.seed}};
}

PhantomSpec phantom_spec_from_json(const Json& j, PhantomSpec s) {
  {
    Reader r(j, "phantom");
    r.get("dims", s.dims);
    r.get("spacing", s.spacing);
    r.get("lesion_center", s.lesion_center);
    r.get("lesion_radii", s.lesion_radii);
    r.get("texture_sigma_voxels", s.texture_sigma_voxels);
    r.get("texture_amplitude", s.texture_amplitude);
    if (const Json* k = r.sub("lesion_kinetics")) read_kinetics(*k, s.lesion, "phantom.lesion_kinetics");
    if (const Json* k = r.sub("background_kinetics")) read_kinetics(*k, s.background, "phantom.background_kinetics");
    r.get("speckle_sigma", s.speckle_sigma);
    r.get("additive_sigma", s.additive_sigma);
    r.get("frame_rate", s.frame_rate);
    r.get("duration", s.duration);
    r.get("seed", s.seed);
    r.finish();
  }
  s.validate();
  return s;
}

Json to_json(const MotionSpec& m) {
  return {{"amplitude_voxels", m.amplitude_voxels},
          {"period_s", m.period_s},
          {"phase", m.phase},
          {"axis", vec_json(m.axis)},
          {"drift_voxels", m.drift_voxels},
          {"drift_axis", vec_json(m.drift_axis)},
          {"step_voxels", m.step_voxels},
          {"step_frame", m.step_frame},
          {"step_axis", vec_json(m.step_axis)}};
}

MotionSpec motion_spec_from_json(const Json& j, MotionSpec m) {
  Reader r(j, "motion");
  r.get("amplitude_voxels", m.amplitude_voxels);
  r.get("period_s", m.period_s);
  r.get("phase", m.phase);
  r.get("axis", m.axis);
  r.get("drift_voxels", m.drift_voxels);
  r.get("drift_axis", m.drift_axis);
  r.get("step_voxels", m.step_voxels);
  r.get("step_frame", m.step_frame);
  r.get("step_axis", m.step_axis);
  r.finish();
  return m;
}

Json to_json(const MotionTrajectory& trajectory) {
  Json frames = Json::array();
  for (std::size_t i = 0; i < trajectory.size(); ++i)
    frames.push_back({{"frame", i},
                      {"displacement_mm", vec_json(trajectory.displacements[i])},
                      {"pull_back", to_json(trajectory.transforms[i])}});
  return {{"convention", "pull_back maps a frame-grid point (mm) to the motion-free grid"},
          {"frames", frames}};
}

Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("'" + path + "' is not valid JSON: " + e.what());
  }
}

void write_json_file(const std::string& path, const Json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed for '" + path + "'");
}

void save_grid(const BSplineGrid& grid, const std::string& path) {
  NiftiHeaderView h;
  h.ndim = 4;
  h.dims = {grid.control_dims[0], grid.control_dims[1], grid.control_dims[2], 3};
  h.spacing_mm = {grid.control_spacing[0], grid.control_spacing[1], grid.control_spacing[2]};
  h.description = "dceus bspline control displacements (mm)";
  std::vector<double> v;
  v.reserve(3 * grid.control_count());
  for (int c = 0; c < 3; ++c) v.insert(v.end(), grid.coefficients[c].begin(), grid.coefficients[c].end());
  write_nifti(path, h, v, NiftiType::float64);
  const Geometry& g = grid.reference;
  write_json_file(path + ".json", {{"reference", {{"dims", idx_json(g.dims)},
                                                  {"spacing", vec_json(g.spacing)},
                                                  {"origin", vec_json(g.origin)}}},
                                   {"control_spacing_mm", vec_json(grid.control_spacing)},
                                   {"control_dims", idx_json(grid.control_dims)},
                                   {"first_control_offset", "control (0,0,0) sits at origin - control_spacing"},
                                   {"init_affine", to_json(grid.init)}});
}

BSplineGrid load_grid(const std::string& path) {
  const Json side = read_json_file(path + ".json");
  try {
    Geometry g;
    g.dims = side.at("reference").at("dims").get<Index3>();
    const auto sp = side.at("reference").at("spacing").get<std::array<double, 3>>();
    const auto org = side.at("reference").at("origin").get<std::array<double, 3>>();
    g.spacing = Vec3(sp[0], sp[1], sp[2]);
    g.origin = Vec3(org[0], org[1], org[2]);
    const auto cs = side.at("control_spacing_mm").get<std::array<double, 3>>();
    BSplineGrid grid = BSplineGrid::create(g, Vec3(cs[0], cs[1], cs[2]), affine_from_json(side.at("init_affine")));
    const NiftiImage img = read_nifti(path);
    if (img.header.dims[0] != grid.control_dims[0] || img.header.dims[1] != grid.control_dims[1] ||
        img.header.dims[2] != grid.control_dims[2] || img.header.dims[3] != 3)
      throw FormatError("grid '" + path + "': lattice size does not match its sidecar");
    const std::size_t n = grid.control_count();
    for (int c = 0; c < 3; ++c)
      std::copy(img.voxels.begin() + c * n, img.voxels.begin() + (c + 1) * n, grid.coefficients[c].begin());
    if (!grid.all_finite()) throw FormatError("grid '" + path + "': non-finite displacement");
    return grid;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("grid sidecar '" + path + ".json': " + e.what());
  }
}

}  // namespace dceus
