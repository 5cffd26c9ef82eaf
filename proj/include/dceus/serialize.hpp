#pragma once

#include <string>

#include <json.hpp>

#include "dceus/bspline.hpp"
#include "dceus/phantom.hpp"
#include "dceus/pipeline.hpp"

namespace dceus {

using Json = nlohmann::ordered_json;

const char* to_string(Interpolation mode);
Interpolation interpolation_from_string(const std::string& name);

Json to_json(const AffineTransform& t);
AffineTransform affine_from_json(const Json& j);

/// All fields, defaults included.
Json to_json(const PipelineConfig& cfg);
/// Overlays the keys present in `j` onto `base`; unknown keys and wrong
/// types raise ConfigError. The result is validated.
PipelineConfig pipeline_config_from_json(const Json& j, PipelineConfig base = {});

Json to_json(const CorrectionReport& report);
Json to_json(const PhantomSpec& spec);
PhantomSpec phantom_spec_from_json(const Json& j, PhantomSpec base = {});
Json to_json(const MotionSpec& motion);
MotionSpec motion_spec_from_json(const Json& j, MotionSpec base = {});
Json to_json(const MotionTrajectory& trajectory);

Json read_json_file(const std::string& path);
void write_json_file(const std::string& path, const Json& j);

/// Lattice as a 4D NIfTI (control dims x 3 components, float64) plus a JSON
/// sidecar `<path>.json` holding the reference grid, spacing and init affine.
void save_grid(const BSplineGrid& grid, const std::string& path);
BSplineGrid load_grid(const std::string& path);

}  // namespace dceus
