#pragma once

// C-arm style poses and the 28-view sampling protocol.
//
// World frame is RAS: +x patient right, +y anterior, +z superior. Orbit
// rotates the gantry about the superior axis (transverse plane), tilt about the
// left-right axis (sagittal plane). At orbit = tilt = 0 the source sits
// anterior of the center and the optical axis points posterior.

#include <frk/geometry.hpp>

#include <string>
#include <string_view>
#include <vector>

namespace frk {

enum class ViewClass { AP, LATERAL, OBLIQUE, MISC };

std::string_view to_string(ViewClass c);
ViewClass view_class_from_string(std::string_view s);

struct Pose {
  double orbit_deg = 0.0;
  double tilt_deg = 0.0;
  double focal_len_mm = 1000.0;         ///< source-to-detector distance
  double source_to_center_mm = 500.0;
  int detector_width_px = 448;
  int detector_height_px = 448;
  double pixel_pitch_mm = 0.66;
  ViewClass view_class = ViewClass::MISC;
  Point3 center_mm = Point3::Zero();    ///< isocenter the optical axis passes through

  /// Throws InvalidInput naming the first bad field.
  void validate() const;

  /// Unit vector from the center towards the source.
  Point3 source_direction() const;
  Point3 source_position() const { return center_mm + source_to_center_mm * source_direction(); }

  /// The pose with both gantry angles offset.
  Pose deviated(double d_orbit_deg, double d_tilt_deg) const;
};

/// Intrinsics with the principal point at the detector center.
Eigen::Matrix3d pose_intrinsics(const Pose& pose);
/// World-to-camera rotation (rows: image +u, image +v, optical axis).
Eigen::Matrix3d pose_rotation(const Pose& pose);
CameraMatrix camera_from_pose(const Pose& pose);

/// Off-plane stand-ins for the data-derived miscellaneous poses:
/// (orbit, tilt) pairs in degrees.
const std::vector<std::pair<double, double>>& misc_pose_table();

/// Six AP, six lateral, four oblique and twelve miscellaneous poses on a sphere
/// of the given diameter around `center`, in that order.
std::vector<Pose> sample_pose_protocol(const Point3& center, double sphere_diameter_mm = 1000.0,
                                       const Pose& detector = Pose{});

}  // namespace frk
