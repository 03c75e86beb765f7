#include <frk/json_io.hpp>

namespace frk {

namespace {

template <typename Derived>
Json matrix_json(const Eigen::MatrixBase<Derived>& m) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

Json vec_json(const Point3& v) { return Json::array({v.x(), v.y(), v.z()}); }

double number(const Json& j, const char* field) {
  if (!j.is_number()) throw Error(ErrorCode::InvalidInput, std::string("'") + field + "' must be a number", field);
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw Error(ErrorCode::InvalidInput, std::string("'") + field + "' must be finite", field);
  return v;
}

Point3 point3(const Json& j, const char* field) {
  if (!j.is_array() || j.size() != 3) throw Error(ErrorCode::InvalidInput, std::string("'") + field + "' must be a 3-array", field);
  return {number(j[0], field), number(j[1], field), number(j[2], field)};
}

}  // namespace

std::string dump_json(const Json& j) { return j.dump(2) + "\n"; }

Json parse_json(const std::string& text, const char* what) {
  try {
    return Json::parse(text);
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::Format, std::string(what) + " is not valid JSON: " + e.what(), what);
  }
}

Json load_json(const std::filesystem::path& path) { return parse_json(read_file(path), "json"); }

Json camera_to_json(const CameraMatrix& cam) {
  const CameraMatrix n = cam.normalize();
  const Decomposition d = decompose_camera(n);
  Json j;
  j["P"] = matrix_json(n.matrix());
  j["K"] = matrix_json(d.k);
  j["R"] = matrix_json(d.r);
  j["X_o"] = vec_json(d.x_o);
  return j;
}

CameraMatrix camera_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("P")) throw Error(ErrorCode::InvalidInput, "camera JSON needs 'P'", "P");
  const Json& p = j["P"];
  Mat34<double> m;
  if (p.is_array() && p.size() == 3 && p[0].is_array()) {
    for (int r = 0; r < 3; ++r) {
      if (!p[r].is_array() || p[r].size() != 4) throw Error(ErrorCode::InvalidInput, "'P' rows must have 4 entries", "P");
      for (int c = 0; c < 4; ++c) m(r, c) = number(p[r][c], "P");
    }
  } else if (p.is_array() && p.size() == 12) {
    for (int i = 0; i < 12; ++i) m(i / 4, i % 4) = number(p[i], "P");
  } else {
    throw Error(ErrorCode::InvalidInput, "'P' must be 3x4 rows or 12 numbers", "P");
  }
  return CameraMatrix(m);
}

Json pose_to_json(const Pose& p) {
  return Json{{"orbit_deg", p.orbit_deg},
              {"tilt_deg", p.tilt_deg},
              {"focal_len_mm", p.focal_len_mm},
              {"source_to_center_mm", p.source_to_center_mm},
              {"width", p.detector_width_px},
              {"height", p.detector_height_px},
              {"pixel_pitch_mm", p.pixel_pitch_mm},
              {"view_class", std::string(to_string(p.view_class))},
              {"center_mm", vec_json(p.center_mm)}};
}

Pose pose_from_json(const Json& j) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidInput, "pose must be an object", "pose");
  Pose p;
  auto num = [&](const char* key, double& dst) {
    if (j.contains(key)) dst = number(j[key], key);
  };
  auto integer = [&](const char* key, int& dst) {
    if (!j.contains(key)) return;
    if (!j[key].is_number_integer()) throw Error(ErrorCode::InvalidInput, std::string("'") + key + "' must be an integer", key);
    dst = j[key].get<int>();
  };
  num("orbit_deg", p.orbit_deg);
  num("tilt_deg", p.tilt_deg);
  num("focal_len_mm", p.focal_len_mm);
  num("source_to_center_mm", p.source_to_center_mm);
  num("pixel_pitch_mm", p.pixel_pitch_mm);
  integer("width", p.detector_width_px);
  integer("height", p.detector_height_px);
  if (j.contains("view_class")) {
    if (!j["view_class"].is_string()) throw Error(ErrorCode::InvalidInput, "'view_class' must be a string", "view_class");
    p.view_class = view_class_from_string(j["view_class"].get<std::string>());
  }
  if (j.contains("center_mm")) p.center_mm = point3(j["center_mm"], "center_mm");
  p.validate();
  return p;
}

Json fiducials_to_json(const FiducialSet& f) {
  Json pts = Json::array(), cls = Json::array();
  for (const auto& p : f.points3d) pts.push_back(vec_json(p));
  for (auto c : f.classes) cls.push_back(c == BeadClass::REFERENCE ? "REF" : "STD");
  return Json{{"points3d_mm", pts}, {"class", cls}};
}

FiducialSet fiducials_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("points3d_mm") || !j["points3d_mm"].is_array())
    throw Error(ErrorCode::InvalidInput, "fiducial JSON needs 'points3d_mm'", "points3d_mm");
  if (!j.contains("class") || !j["class"].is_array())
    throw Error(ErrorCode::InvalidInput, "fiducial JSON needs 'class'", "class");
  FiducialSet f;
  for (const auto& p : j["points3d_mm"]) f.points3d.push_back(point3(p, "points3d_mm"));
  for (const auto& c : j["class"]) {
    const std::string s = c.is_string() ? c.get<std::string>() : "";
    if (s == "REF") f.classes.push_back(BeadClass::REFERENCE);
    else if (s == "STD") f.classes.push_back(BeadClass::STANDARD);
    else throw Error(ErrorCode::InvalidInput, "class entries must be \"REF\" or \"STD\"", "class");
  }
  f.validate();
  return f;
}

Json detection_to_json(const Detection& d) {
  return Json{{"center", Json::array({d.center.x(), d.center.y()})},
              {"radius_px", d.radius_px},
              {"score", d.score},
              {"class", d.bead_class == BeadClass::REFERENCE ? "REF" : "STD"}};
}

Detection detection_from_json(const Json& j) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidInput, "detection must be an object", "detection");
  Detection d;
  if (!j.contains("center") || !j["center"].is_array() || j["center"].size() != 2)
    throw Error(ErrorCode::InvalidInput, "'center' must be [u, v]", "center");
  d.center = Point2(number(j["center"][0], "center"), number(j["center"][1], "center"));
  if (j.contains("radius_px")) d.radius_px = number(j["radius_px"], "radius_px");
  if (j.contains("score")) d.score = number(j["score"], "score");
  const std::string cls = j.value("class", "STD");
  if (cls != "REF" && cls != "STD") throw Error(ErrorCode::InvalidInput, "class must be REF or STD", "class");
  d.bead_class = cls == "REF" ? BeadClass::REFERENCE : BeadClass::STANDARD;
  return d;
}

Json calibration_to_json(const CalibrationResult& r) {
  Json j = camera_to_json(r.camera);
  Json pts = Json::array();
  for (std::size_t i = 0; i < r.residuals_px.size(); ++i)
    pts.push_back({{"fiducial", r.point_ids[i]}, {"detection", r.detection_ids[i]}, {"residual_px", r.residuals_px[i]}});
  j["residuals"] = pts;
  j["mean_px"] = r.mean_px;
  j["median_px"] = r.median_px;
  j["sd_px"] = r.sd_px;
  j["pixel_pitch_mm"] = r.pixel_pitch_mm;
  j["mean_mm"] = r.mean_mm;
  j["median_mm"] = r.median_mm;
  return j;
}

Json crop_manifest(const std::vector<CropWindow>& crops) {
  Json arr = Json::array();
  for (const auto& c : crops)
    arr.push_back({{"label", c.label},
                   {"box", Json::array({c.box.u_min, c.box.v_min, c.box.w, c.box.h})},
                   {"square_side", c.square_side},
                   {"t_x", c.crop.t_x},
                   {"t_y", c.crop.t_y},
                   {"scale", c.crop.scale},
                   {"adjusted_P", matrix_json(c.adjusted.matrix())}});
  return arr;
}

Json metrics_to_json(const MetricsReport& m) {
  return Json{{"f1", m.f1},
              {"iou", m.iou},
              {"surface_score", m.surface_score},
              {"tau_mm", m.tau_mm},
              {"asd_mm", m.asd_mm},
              {"hd95_mm", m.hd95_mm},
              {"counts",
               {{"tp", m.counts.tp},
                {"fp", m.counts.fp},
                {"fn", m.counts.fn},
                {"pred_surface", m.pred_surface_points},
                {"gt_surface", m.gt_surface_points}}}};
}

}  // namespace frk
