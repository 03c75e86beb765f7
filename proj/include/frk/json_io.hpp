#pragma once

// JSON wire and file formats shared by the CLI and the HTTP service.

#include <frk/calibration.hpp>
#include <frk/carve.hpp>
#include <frk/localize.hpp>
#include <frk/metrics.hpp>
#include <frk/pose.hpp>

#include <json.hpp>

#include <filesystem>
#include <string>

namespace frk {

using Json = nlohmann::json;

/// Pretty-printed with two-space indent and a trailing newline.
std::string dump_json(const Json& j);
Json parse_json(const std::string& text, const char* what = "json");
Json load_json(const std::filesystem::path& path);

/// {"P": 3x4 rows, "K", "R", "X_o"}.
Json camera_to_json(const CameraMatrix& cam);
/// Accepts "P" as 3 rows of 4 or as 12 row-major numbers.
CameraMatrix camera_from_json(const Json& j);

Json pose_to_json(const Pose& p);
/// Missing keys keep Pose defaults; malformed ones throw naming the key.
Pose pose_from_json(const Json& j);

/// {"points3d_mm": [[x, y, z], ...], "class": ["REF" | "STD", ...]}
Json fiducials_to_json(const FiducialSet& f);
FiducialSet fiducials_from_json(const Json& j);

Json detection_to_json(const Detection& d);
Detection detection_from_json(const Json& j);

Json calibration_to_json(const CalibrationResult& r);

/// [{label, box, square_side, t_x, t_y, scale, adjusted_P}]
Json crop_manifest(const std::vector<CropWindow>& crops);

Json metrics_to_json(const MetricsReport& m);

}  // namespace frk
