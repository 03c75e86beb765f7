#pragma once

// Small deterministic artifacts in every on-disk format. The bytes are frozen
// under tests/golden; regenerate with FRK_UPDATE_GOLDEN=1 after an intended
// format change.

#include <frk/harness.hpp>
#include <frk/image.hpp>
#include <frk/json_io.hpp>
#include <frk/pipeline.hpp>

#include <map>
#include <string>

namespace frk::test {

inline std::map<std::string, std::string> golden_fixtures() {
  std::map<std::string, std::string> out;
  const Phantom ph = l_shape_phantom(Point3(-12, -4, -10));
  auto [hu, labels] = rasterize_phantom(ph, lattice_around(ph, 2.0, 4.0));

  const EncodedVolume ct = encode_volume(hu);
  out["ct.vjson"] = ct.header;
  out["ct.raw"] = ct.raw;
  const EncodedVolume lab = encode_volume(labels);
  out["labels.vjson"] = lab.header;
  out["labels.raw"] = lab.raw;

  Pose pose;
  pose.orbit_deg = 30;
  pose.tilt_deg = 10;
  pose.detector_width_px = 64;
  pose.detector_height_px = 48;
  pose.pixel_pitch_mm = 2.0;
  pose.view_class = ViewClass::OBLIQUE;
  const CameraMatrix cam = camera_from_pose(pose);
  out["pose.json"] = dump_json(pose_to_json(pose));
  out["camera.json"] = dump_json(camera_to_json(cam));

  RenderSettings rs;
  rs.width = 64;
  rs.height = 48;
  rs.pixel_pitch_mm = 2.0;
  out["drr.pgm"] = render_image(AnyVolume(hu), cam, rs).pgm;
  rs.label = 1;
  out["mask.pgm"] = render_image(AnyVolume(labels), cam, rs).pgm;

  FiducialSet f;
  for (int i = 0; i < 14; ++i) {
    f.points3d.emplace_back(10.0 * (i % 3) - 10, 7.5 * (i % 5) - 15, 4.0 * i - 28);
    f.classes.push_back(i < 7 ? BeadClass::REFERENCE : BeadClass::STANDARD);
  }
  out["fiducials.json"] = dump_json(fiducials_to_json(f));

  VolumeLabels shifted(labels.lattice, 0);
  const auto& d = labels.lattice.dims;
  for (int k = 0; k < d.z(); ++k)
    for (int j = 0; j < d.y(); ++j)
      for (int i = 1; i < d.x(); ++i) shifted.at(i, j, k) = labels.at(i - 1, j, k);
  out["metrics.json"] = dump_json(metrics_to_json(evaluate_grids(shifted, labels, 2.0)));
  return out;
}

}  // namespace frk::test
