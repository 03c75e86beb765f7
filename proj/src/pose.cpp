#include <frk/pose.hpp>

#include <numbers>

namespace frk {

namespace {

double deg2rad(double deg) { return deg * std::numbers::pi / 180.0; }

Eigen::Matrix3d gantry_rotation(double orbit_deg, double tilt_deg) {
  return (Eigen::AngleAxisd(deg2rad(orbit_deg), Eigen::Vector3d::UnitZ()) *
          Eigen::AngleAxisd(deg2rad(tilt_deg), Eigen::Vector3d::UnitX()))
      .toRotationMatrix();
}

}  // namespace

std::string_view to_string(ViewClass c) {
  switch (c) {
    case ViewClass::AP: return "AP";
    case ViewClass::LATERAL: return "LATERAL";
    case ViewClass::OBLIQUE: return "OBLIQUE";
    case ViewClass::MISC: return "MISC";
  }
  return "MISC";
}

ViewClass view_class_from_string(std::string_view s) {
  if (s == "AP") return ViewClass::AP;
  if (s == "LATERAL") return ViewClass::LATERAL;
  if (s == "OBLIQUE") return ViewClass::OBLIQUE;
  if (s == "MISC") return ViewClass::MISC;
  throw Error(ErrorCode::InvalidInput, "unknown view class '" + std::string(s) + "'", "view_class");
}

void Pose::validate() const {
  auto bad = [](const char* field, const std::string& why) {
    throw Error(ErrorCode::InvalidInput, std::string(field) + ": " + why, field);
  };
  if (!std::isfinite(orbit_deg)) bad("orbit_deg", "must be finite");
  if (!std::isfinite(tilt_deg)) bad("tilt_deg", "must be finite");
  if (!(focal_len_mm > 0.0) || !std::isfinite(focal_len_mm)) bad("focal_len_mm", "must be > 0");
  if (!(source_to_center_mm > 0.0) || !std::isfinite(source_to_center_mm))
    bad("source_to_center_mm", "must be > 0");
  if (detector_width_px < 1) bad("width", "must be >= 1");
  if (detector_height_px < 1) bad("height", "must be >= 1");
  if (!(pixel_pitch_mm > 0.0) || !std::isfinite(pixel_pitch_mm)) bad("pixel_pitch_mm", "must be > 0");
  if (!center_mm.allFinite()) bad("center_mm", "must be finite");
}

Point3 Pose::source_direction() const { return gantry_rotation(orbit_deg, tilt_deg) * Point3::UnitY(); }

Pose Pose::deviated(double d_orbit_deg, double d_tilt_deg) const {
  Pose p = *this;
  p.orbit_deg += d_orbit_deg;
  p.tilt_deg += d_tilt_deg;
  return p;
}

Eigen::Matrix3d pose_intrinsics(const Pose& pose) {
  const double f_px = pose.focal_len_mm / pose.pixel_pitch_mm;
  Eigen::Matrix3d k;
  k << f_px, 0, 0.5 * pose.detector_width_px,
       0, f_px, 0.5 * pose.detector_height_px,
       0, 0, 1;
  return k;
}

Eigen::Matrix3d pose_rotation(const Pose& pose) {
  const Eigen::Matrix3d g = gantry_rotation(pose.orbit_deg, pose.tilt_deg);
  const Eigen::Vector3d axis = -(g * Eigen::Vector3d::UnitY());
  const Eigen::Vector3d down = -(g * Eigen::Vector3d::UnitZ());
  const Eigen::Vector3d right = down.cross(axis);
  Eigen::Matrix3d r;
  r.row(0) = right.transpose();
  r.row(1) = down.transpose();
  r.row(2) = axis.transpose();
  return r;
}

CameraMatrix camera_from_pose(const Pose& pose) {
  pose.validate();
  return compose_camera<double>(pose_intrinsics(pose), pose_rotation(pose), pose.source_position());
}

const std::vector<std::pair<double, double>>& misc_pose_table() {
  static const std::vector<std::pair<double, double>> table = {
      {30.0, 10.0},  {-30.0, 10.0},  {30.0, -10.0}, {-30.0, -10.0},
      {60.0, 20.0},  {-60.0, 20.0},  {60.0, -20.0}, {-60.0, -20.0},
      {30.0, 20.0},  {-30.0, -20.0},
      {0.0, 30.0},   {0.0, -30.0},  // superior / inferior tilted AP
  };
  return table;
}

std::vector<Pose> sample_pose_protocol(const Point3& center, double sphere_diameter_mm, const Pose& detector) {
  if (!(sphere_diameter_mm > 0.0))
    throw Error(ErrorCode::InvalidInput, "sphere diameter must be > 0", "sphere_diameter_mm");

  std::vector<Pose> poses;
  poses.reserve(28);
  auto add = [&](ViewClass cls, double orbit, double tilt) {
    Pose p = detector;
    p.orbit_deg = orbit;
    p.tilt_deg = tilt;
    p.view_class = cls;
    p.center_mm = center;
    p.source_to_center_mm = 0.5 * sphere_diameter_mm;
    poses.push_back(p);
  };
  const double deviations[] = {-15.0, 0.0, 15.0};
  for (double side : {0.0, 180.0})
    for (double d : deviations) add(ViewClass::AP, side, d);
  for (double side : {90.0, -90.0})
    for (double d : deviations) add(ViewClass::LATERAL, side, d);
  for (double side : {0.0, 180.0})
    for (double d : {-20.0, 20.0}) add(ViewClass::OBLIQUE, side + d, 0.0);
  for (const auto& [orbit, tilt] : misc_pose_table()) add(ViewClass::MISC, orbit, tilt);
  return poses;
}

}  // namespace frk
