#include <frk/harness.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace frk {

// ------------------------------------------------------------------ phantom JSON

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

Json vec3_json(const Point3& v) { return Json::array({v.x(), v.y(), v.z()}); }

Point3 vec3_from(const Json& j, const char* field) {
  if (!j.is_array() || j.size() != 3 || !j[0].is_number() || !j[1].is_number() || !j[2].is_number())
    throw Error(ErrorCode::Format, std::string("'") + field + "' must be a 3-array of numbers", field);
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

double num_from(const Json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_number())
    throw Error(ErrorCode::Format, std::string("'") + key + "' must be a number", key);
  return j[key].get<double>();
}

}  // namespace

Json phantom_to_json(const Phantom& ph) {
  Json prims = Json::array();
  for (const auto& p : ph.primitives) {
    Json j = std::visit(overloaded{
                            [](const Sphere& s) {
                              return Json{{"type", "sphere"}, {"center", vec3_json(s.center)}, {"radius", s.radius}};
                            },
                            [](const Box& b) {
                              Json rot = Json::array();
                              for (int r = 0; r < 3; ++r)
                                rot.push_back(Json::array({b.rotation(r, 0), b.rotation(r, 1), b.rotation(r, 2)}));
                              return Json{{"type", "box"},
                                          {"center", vec3_json(b.center)},
                                          {"half_extents", vec3_json(b.half_extents)},
                                          {"rotation", rot}};
                            },
                            [](const Cylinder& c) {
                              return Json{{"type", "cylinder"},
                                          {"p0", vec3_json(c.p0)},
                                          {"p1", vec3_json(c.p1)},
                                          {"radius", c.radius}};
                            },
                        },
                        p.shape);
    j["hu"] = p.hu;
    j["label"] = p.label;
    prims.push_back(j);
  }
  Json beads = Json::array();
  for (const auto& b : ph.beads)
    beads.push_back({{"center", vec3_json(b.center)}, {"diameter_mm", b.diameter_mm}, {"reference", b.reference}});
  return Json{{"primitives", prims}, {"beads", beads}};
}

Phantom phantom_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("primitives") || !j["primitives"].is_array())
    throw Error(ErrorCode::Format, "phantom JSON needs a 'primitives' array", "primitives");
  Phantom ph;
  for (const auto& p : j["primitives"]) {
    const std::string type = p.value("type", "");
    Primitive prim;
    if (type == "sphere") {
      prim.shape = Sphere{vec3_from(p["center"], "center"), num_from(p, "radius")};
    } else if (type == "box") {
      Box b{vec3_from(p["center"], "center"), vec3_from(p["half_extents"], "half_extents"), Eigen::Matrix3d::Identity()};
      if (p.contains("rotation")) {
        const Json& r = p["rotation"];
        if (!r.is_array() || r.size() != 3) throw Error(ErrorCode::Format, "'rotation' must be 3x3", "rotation");
        for (int i = 0; i < 3; ++i) b.rotation.row(i) = vec3_from(r[i], "rotation").transpose();
      }
      prim.shape = b;
    } else if (type == "cylinder") {
      prim.shape = Cylinder{vec3_from(p["p0"], "p0"), vec3_from(p["p1"], "p1"), num_from(p, "radius")};
    } else {
      throw Error(ErrorCode::Format, "unknown primitive type '" + type + "'", "type");
    }
    prim.hu = num_from(p, "hu");
    const double label = num_from(p, "label");
    if (label < 0 || label > 255 || label != std::floor(label))
      throw Error(ErrorCode::Format, "label must be an integer in [0, 255]", "label");
    prim.label = static_cast<std::uint8_t>(label);
    ph.primitives.push_back(prim);
  }
  if (j.contains("beads"))
    for (const auto& b : j["beads"])
      ph.beads.push_back({vec3_from(b["center"], "center"), num_from(b, "diameter_mm"), b.value("reference", true)});
  ph.validate();
  return ph;
}

// ------------------------------------------------------------------ dataset

const DatasetItem& Dataset::item(std::uint8_t label, int pose_index) const {
  const auto it = items.find(label);
  if (it == items.end() || pose_index < 0 || pose_index >= static_cast<int>(it->second.size()))
    throw Error(ErrorCode::NotFound, "no dataset item for label " + std::to_string(label) + " pose " +
                                         std::to_string(pose_index), "item");
  return it->second[static_cast<std::size_t>(pose_index)];
}

std::vector<int> Dataset::pose_indices(ViewClass c) const {
  std::vector<int> out;
  const auto poses = sample_pose_protocol(Point3::Zero(), options.sphere_diameter_mm, options.detector);
  for (std::size_t i = 0; i < poses.size(); ++i)
    if (poses[i].view_class == c) out.push_back(static_cast<int>(i));
  return out;
}

namespace {

Point3 label_center(const Dataset& ds, std::uint8_t label) {
  if (!ds.phantom.primitives.empty()) return ds.phantom.label_bounds(label).center();
  return label_bounds(ds.labels, label).center();
}

void hash_item(DatasetItem& it) {
  it.mask_hash = content_hash(encode_pgm(to_mask8(it.mask)));
  it.camera_hash = content_hash(dump_json(camera_to_json(it.cam)));
  it.drr_hash = it.drr.raw.size() ? content_hash(encode_pgm(it.drr.normalized())) : std::string();
}

}  // namespace

Dataset build_dataset(const Phantom& ph, const DatasetOptions& opts) {
  ph.validate();
  Dataset ds;
  ds.phantom = ph;
  ds.options = opts;
  const Lattice lat = lattice_around(ph, opts.spacing_mm, 10.0);
  std::tie(ds.hu, ds.labels) = rasterize_phantom(ph, lat);
  const VolumeF att = opts.render_drr ? threshold_bone(ds.hu, 0.0) : VolumeF();
  const int w = opts.detector.detector_width_px, h = opts.detector.detector_height_px;

  for (auto id : label_ids(ds.labels)) {
    const auto poses = sample_pose_protocol(label_center(ds, id), opts.sphere_diameter_mm, opts.detector);
    auto& list = ds.items[id];
    for (std::size_t i = 0; i < poses.size(); ++i) {
      DatasetItem it;
      it.label = id;
      it.pose_index = static_cast<int>(i);
      it.pose = poses[i];
      it.cam = camera_from_pose(poses[i]);
      it.mask = render_mask(ds.labels, id, it.cam, w, h);
      if (opts.render_drr) {
        it.drr = render_drr(att, it.cam, w, h, default_step(lat), opts.detector.pixel_pitch_mm);
        if (opts.include_beads) add_beads(it.drr, it.cam, ph.beads, kBeadAttenuation);
      }
      hash_item(it);
      list.push_back(std::move(it));
    }
  }
  return ds;
}

Json write_dataset(const Dataset& ds, const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot create " + out_dir.string() + ": " + ec.message(), "out");

  auto file_entry = [&](const std::string& rel, const std::string& bytes) {
    write_file(out_dir / rel, bytes);
    return Json{{"path", rel}, {"hash", content_hash(bytes)}};
  };

  Json m;
  m["version"] = 1;
  m["seed"] = ds.options.seed;
  m["spacing_mm"] = ds.options.spacing_mm;
  m["sphere_diameter_mm"] = ds.options.sphere_diameter_mm;
  m["detector"] = pose_to_json(ds.options.detector);
  m["phantom"] = file_entry("phantom.json", dump_json(phantom_to_json(ds.phantom)));

  save_volume(ds.hu, out_dir / "ct.vjson");
  save_volume(ds.labels, out_dir / "labels.vjson");
  m["volume"] = {{"path", "ct.vjson"},
                 {"hash", content_hash(read_file(out_dir / "ct.vjson") + read_file(out_dir / "ct.raw"))}};
  m["labels"] = {{"path", "labels.vjson"},
                 {"hash", content_hash(read_file(out_dir / "labels.vjson") + read_file(out_dir / "labels.raw"))}};

  Json items = Json::array();
  Json warnings = Json::array();
  if (ds.items.empty()) warnings.push_back("phantom has no labeled vertebrae; manifest is empty");
  for (const auto& [id, list] : ds.items) {
    for (const auto& it : list) {
      char stem[64];
      std::snprintf(stem, sizeof stem, "L%u/p%02d_%s", static_cast<unsigned>(id), it.pose_index,
                    std::string(to_string(it.pose.view_class)).c_str());
      Json e;
      e["label"] = id;
      e["pose_index"] = it.pose_index;
      e["view_class"] = std::string(to_string(it.pose.view_class));
      e["pose"] = pose_to_json(it.pose);
      e["camera"] = file_entry(std::string(stem) + "_cam.json", dump_json(camera_to_json(it.cam)));
      e["mask"] = file_entry(std::string(stem) + "_mask.pgm", encode_pgm(to_mask8(it.mask)));
      if (it.drr.raw.size()) e["drr"] = file_entry(std::string(stem) + "_drr.pgm", encode_pgm(it.drr.normalized()));
      items.push_back(e);
    }
  }
  m["items"] = items;
  m["warnings"] = warnings;
  write_file(out_dir / "manifest.json", dump_json(m));
  return m;
}

Dataset load_dataset(const std::filesystem::path& manifest_path) {
  const auto dir = manifest_path.parent_path();
  const Json m = load_json(manifest_path);
  auto checked = [&](const Json& entry, const char* what) {
    if (!entry.is_object() || !entry.contains("path") || !entry.contains("hash"))
      throw Error(ErrorCode::Format, std::string("manifest entry '") + what + "' needs path and hash", what);
    const auto path = dir / entry["path"].get<std::string>();
    std::string bytes = read_file(path);
    if (content_hash(bytes) != entry["hash"].get<std::string>())
      throw Error(ErrorCode::HashMismatch, "content of " + path.string() + " no longer matches the manifest", what);
    return bytes;
  };

  Dataset ds;
  ds.options.seed = m.value("seed", std::uint64_t{42});
  ds.options.spacing_mm = m.value("spacing_mm", 0.5);
  ds.options.sphere_diameter_mm = m.value("sphere_diameter_mm", 1000.0);
  if (m.contains("detector")) ds.options.detector = pose_from_json(m["detector"]);
  ds.phantom = phantom_from_json(parse_json(checked(m["phantom"], "phantom"), "phantom"));
  for (const char* key : {"volume", "labels"}) {
    const auto header_path = dir / m[key]["path"].get<std::string>();
    const std::string header = read_file(header_path);
    const std::string raw = read_file(raw_path_for(header_path));
    if (content_hash(header + raw) != m[key]["hash"].get<std::string>())
      throw Error(ErrorCode::HashMismatch, header_path.string() + " no longer matches the manifest", key);
    if (std::string(key) == "volume") ds.hu = decode_volume_hu(header, raw);
    else ds.labels = decode_volume_labels(header, raw);
  }

  for (const auto& e : m.value("items", Json::array())) {
    DatasetItem it;
    it.label = e["label"].get<std::uint8_t>();
    it.pose_index = e["pose_index"].get<int>();
    it.pose = pose_from_json(e["pose"]);
    it.cam = camera_from_json(parse_json(checked(e["camera"], "camera"), "camera"));
    const Image16 mask = decode_pgm(checked(e["mask"], "mask"));
    it.mask = Image8(mask.width, mask.height, 0);
    for (std::size_t i = 0; i < mask.size(); ++i) it.mask.data[i] = mask.data[i] ? 1 : 0;
    if (e.contains("drr")) {
      const Image16 d = decode_pgm(checked(e["drr"], "drr"));
      it.drr = DrrImage{d.width, d.height, it.pose.pixel_pitch_mm, to_double(d)};
    }
    hash_item(it);
    auto& list = ds.items[it.label];
    if (static_cast<int>(list.size()) != it.pose_index)
      throw Error(ErrorCode::Format, "manifest items must be in protocol order", "items");
    list.push_back(std::move(it));
  }
  return ds;
}

// ------------------------------------------------------------------ ablations

std::vector<ViewPlan> view_count_plans() {
  return {{"2", {1, 1, 0, 0}}, {"3", {1, 1, 1, 0}}, {"4", {1, 1, 1, 1}}, {"5", {2, 1, 1, 1}},
          {"6", {2, 2, 1, 1}}, {"7", {2, 2, 2, 1}}, {"8", {2, 2, 2, 2}}};
}

std::vector<ViewPlan> view_combo_plans() {
  return {{"1AP-1LAT-1OB-1MISC", {1, 1, 1, 1}},
          {"2AP-2LAT", {2, 2, 0, 0}},
          {"1AP-3LAT", {1, 3, 0, 0}},
          {"3AP-1LAT", {3, 1, 0, 0}}};
}

std::vector<int> realize_plan(const Dataset& ds, const ViewPlan& plan, std::mt19937_64& rng) {
  static constexpr ViewClass kClasses[] = {ViewClass::AP, ViewClass::LATERAL, ViewClass::OBLIQUE, ViewClass::MISC};
  std::vector<int> out;
  for (int c = 0; c < 4; ++c) {
    auto pool = ds.pose_indices(kClasses[c]);
    if (plan.counts[static_cast<std::size_t>(c)] > static_cast<int>(pool.size()))
      throw Error(ErrorCode::InvalidInput, "plan " + plan.name + " asks for more " +
                                               std::string(to_string(kClasses[c])) + " poses than exist", "plan");
    for (int k = 0; k < plan.counts[static_cast<std::size_t>(c)]; ++k) {
      const std::size_t pick = uniform_index(rng, pool.size());
      out.push_back(pool[pick]);
      pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick));
    }
  }
  return out;
}

MetricsReport evaluate_reconstruction(const Dataset& ds, std::uint8_t label, const OccupancyGrid& grid, double tau_mm,
                                      bool* surface_valid) {
  const bool analytic = !ds.phantom.primitives.empty();
  Eigen::AlignedBox3d obj;
  if (analytic) {
    obj = ds.phantom.label_bounds(label);
  } else {
    obj = label_bounds(ds.labels, label);
    const Point3 half = 0.5 * ds.labels.lattice.spacing_mm;
    obj = Eigen::AlignedBox3d(obj.min() - half, obj.max() + half);
  }
  const Lattice eval = expand_to_cover(grid.lattice(), obj);
  const VolumeLabels pred = embed(grid.volume, eval);
  const VolumeLabels gt = analytic ? ground_truth_grid(ds.phantom, label, eval) : ground_truth_grid(ds.labels, label, eval);
  try {
    if (surface_valid) *surface_valid = true;
    return evaluate_grids(pred, gt, tau_mm);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::EmptySurface) throw;
    if (surface_valid) *surface_valid = false;
    MetricsReport r;
    const Overlap o = voxel_overlap(pred, gt);
    r.f1 = o.f1;
    r.iou = o.iou;
    r.counts = o.counts;
    r.tau_mm = tau_mm;
    r.asd_mm = r.hd95_mm = std::numeric_limits<double>::quiet_NaN();
    return r;
  }
}

TrialRecord run_trial(const Dataset& ds, std::uint8_t label, const std::vector<int>& poses, const CarveOptions& carve,
                      double tau_mm, bool ground_truth_origin) {
  std::vector<CropWindow> crops;
  for (int pi : poses) {
    const DatasetItem& it = ds.item(label, pi);
    const ImageD img = (carve.mode == CarveMode::MEAN_THRESH && it.drr.raw.size()) ? it.drr.raw : to_double(it.mask);
    auto c = localize_masks(img, it.cam, {{label, it.mask}});
    if (c.empty())
      throw Error(ErrorCode::InvalidInput, "vertebra " + std::to_string(label) + " not fully visible in pose " +
                                               std::to_string(pi), "poses");
    crops.push_back(std::move(c.front()));
  }
  const std::optional<Point3> gt_center =
      ground_truth_origin ? std::optional<Point3>(label_center(ds, label)) : std::nullopt;
  const Reconstruction rec = reconstruct(crops, carve, gt_center);
  TrialRecord r;
  r.label = label;
  r.poses = poses;
  r.origin = rec.grid.provenance;
  r.carve_ms = rec.carve_ms;
  r.metrics = evaluate_reconstruction(ds, label, rec.grid, tau_mm, &r.surface_valid);
  return r;
}

std::vector<TrialRecord> run_ablation(const Dataset& ds, const std::vector<ViewPlan>& plans,
                                      const std::string& experiment, const TrialOptions& opts) {
  if (opts.trials < 1) throw Error(ErrorCode::InvalidInput, "trials must be >= 1", "trials");
  std::vector<std::uint8_t> labels;
  for (const auto& [id, list] : ds.items) labels.push_back(id);
  if (labels.empty()) throw Error(ErrorCode::InvalidInput, "dataset has no vertebrae", "manifest");

  struct Job {
    std::size_t plan;
    int trial;
    bool gt;
  };
  std::vector<Job> jobs;
  for (std::size_t p = 0; p < plans.size(); ++p)
    for (int t = 0; t < opts.trials; ++t) {
      jobs.push_back({p, t, false});
      if (opts.ground_truth_origin_pair) jobs.push_back({p, t, true});
    }
  std::vector<TrialRecord> out(jobs.size());

#pragma omp parallel for schedule(dynamic, 1)
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    const Job& job = jobs[j];
    // vertebra depends on the trial only, so plans are compared on matched trials
    std::seed_seq vseq{static_cast<std::uint32_t>(opts.seed), static_cast<std::uint32_t>(opts.seed >> 32),
                       static_cast<std::uint32_t>(job.trial), 0x5eedu};
    std::mt19937_64 vrng(vseq);
    const std::uint8_t label = labels[uniform_index(vrng, labels.size())];
    std::seed_seq pseq{static_cast<std::uint32_t>(opts.seed), static_cast<std::uint32_t>(opts.seed >> 32),
                       static_cast<std::uint32_t>(job.trial), static_cast<std::uint32_t>(job.plan) + 1u};
    std::mt19937_64 prng(pseq);
    const auto poses = realize_plan(ds, plans[job.plan], prng);
    TrialRecord r = run_trial(ds, label, poses, opts.carve, opts.tau_mm, job.gt);
    r.experiment = job.gt ? experiment + "_gt_origin" : experiment;
    r.plan = plans[job.plan].name;
    r.trial = job.trial;
    r.seed = opts.seed;
    out[j] = std::move(r);
  }
  return out;
}

namespace {

std::string fmt(double v) {
  if (!std::isfinite(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

struct MeanSd {
  double mean = 0, sd = 0;
};

MeanSd mean_sd(const std::vector<double>& v) {
  std::vector<double> f;
  for (double x : v)
    if (std::isfinite(x)) f.push_back(x);
  if (f.empty()) return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
  const double m = std::accumulate(f.begin(), f.end(), 0.0) / static_cast<double>(f.size());
  double ss = 0;
  for (double x : f) ss += (x - m) * (x - m);
  return {m, f.size() > 1 ? std::sqrt(ss / static_cast<double>(f.size() - 1)) : 0.0};
}

Json finite_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

}  // namespace

std::string trials_csv(const std::vector<TrialRecord>& rows) {
  std::string out = "experiment,plan,trial,f1,iou,surface,asd_mm,hd95_mm,seed\n";
  for (const auto& r : rows) {
    out += r.experiment + "," + r.plan + "," + std::to_string(r.trial) + "," + fmt(r.metrics.f1) + "," +
           fmt(r.metrics.iou) + "," + fmt(r.metrics.surface_score) + "," + fmt(r.metrics.asd_mm) + "," +
           fmt(r.metrics.hd95_mm) + "," + std::to_string(r.seed) + "\n";
  }
  return out;
}

std::vector<PlanSummary> summarize(const std::vector<TrialRecord>& rows) {
  std::vector<PlanSummary> out;
  std::vector<std::pair<std::string, OriginMode>> keys;
  for (const auto& r : rows)
    if (std::find(keys.begin(), keys.end(), std::make_pair(r.plan, r.origin)) == keys.end())
      keys.emplace_back(r.plan, r.origin);
  for (const auto& [plan, origin] : keys) {
    std::vector<double> f1, iou, surf, asd, hd;
    for (const auto& r : rows) {
      if (r.plan != plan || r.origin != origin) continue;
      f1.push_back(r.metrics.f1);
      iou.push_back(r.metrics.iou);
      surf.push_back(r.metrics.surface_score);
      asd.push_back(r.metrics.asd_mm);
      hd.push_back(r.metrics.hd95_mm);
    }
    PlanSummary s;
    s.plan = plan;
    s.origin = origin;
    s.n = static_cast<int>(f1.size());
    auto a = mean_sd(f1);
    s.mean_f1 = a.mean, s.sd_f1 = a.sd;
    a = mean_sd(iou);
    s.mean_iou = a.mean, s.sd_iou = a.sd;
    a = mean_sd(surf);
    s.mean_surface = a.mean, s.sd_surface = a.sd;
    a = mean_sd(asd);
    s.mean_asd = a.mean, s.sd_asd = a.sd;
    a = mean_sd(hd);
    s.mean_hd95 = a.mean, s.sd_hd95 = a.sd;
    out.push_back(s);
  }
  return out;
}

Json summary_json(const std::vector<PlanSummary>& s, std::uint64_t seed) {
  Json rows = Json::array();
  for (const auto& p : s)
    rows.push_back({{"plan", p.plan},
                    {"origin", std::string(to_string(p.origin))},
                    {"n", p.n},
                    {"f1", {{"mean", finite_or_null(p.mean_f1)}, {"sd", finite_or_null(p.sd_f1)}}},
                    {"iou", {{"mean", finite_or_null(p.mean_iou)}, {"sd", finite_or_null(p.sd_iou)}}},
                    {"surface", {{"mean", finite_or_null(p.mean_surface)}, {"sd", finite_or_null(p.sd_surface)}}},
                    {"asd_mm", {{"mean", finite_or_null(p.mean_asd)}, {"sd", finite_or_null(p.sd_asd)}}},
                    {"hd95_mm", {{"mean", finite_or_null(p.mean_hd95)}, {"sd", finite_or_null(p.sd_hd95)}}}});
  return Json{{"seed", seed}, {"plans", rows}};
}

// ------------------------------------------------------------------ heatmap

HeatmapSpec default_heatmap_spec(const Dataset& ds, std::uint8_t label) {
  HeatmapSpec spec;
  spec.label = label;
  const auto& list = ds.items.at(label);
  auto find = [&](ViewClass c, double orbit, double tilt) {
    for (const auto& it : list)
      if (it.pose.view_class == c && it.pose.orbit_deg == orbit && it.pose.tilt_deg == tilt) return it.pose;
    throw Error(ErrorCode::NotFound, "protocol pose missing from dataset", "pose");
  };
  spec.varied = find(ViewClass::AP, 0.0, 0.0);
  spec.fixed = {find(ViewClass::LATERAL, 90.0, 0.0), find(ViewClass::OBLIQUE, 20.0, 0.0),
                find(ViewClass::MISC, misc_pose_table()[0].first, misc_pose_table()[0].second)};
  return spec;
}

HeatmapResult sensitivity_heatmap(const Dataset& ds, const HeatmapSpec& spec) {
  if (spec.grid < 2) throw Error(ErrorCode::InvalidInput, "heatmap grid must be >= 2", "grid");
  const int w = spec.varied.detector_width_px, h = spec.varied.detector_height_px;
  auto crop_for = [&](const Pose& p) {
    const CameraMatrix cam = camera_from_pose(p);
    const Image8 mask = render_mask(ds.labels, spec.label, cam, w, h);
    auto c = localize_masks(to_double(mask), cam, {{spec.label, mask}});
    if (c.empty()) throw Error(ErrorCode::InvalidInput, "vertebra not fully visible in a heatmap pose", "pose");
    return c.front();
  };
  std::vector<CropWindow> fixed;
  for (const auto& p : spec.fixed) fixed.push_back(crop_for(p));

  HeatmapResult res;
  res.grid = spec.grid;
  res.max_deviation_deg = spec.max_deviation_deg;
  res.scores.assign(static_cast<std::size_t>(spec.grid * spec.grid), 0.0);
  const int n = spec.grid * spec.grid;

#pragma omp parallel for schedule(dynamic, 1)
  for (int node = 0; node < n; ++node) {
    const int oi = node % spec.grid, ti = node / spec.grid;
    std::vector<CropWindow> crops{crop_for(spec.varied.deviated(res.offset_deg(oi), res.offset_deg(ti)))};
    crops.insert(crops.end(), fixed.begin(), fixed.end());
    const Reconstruction rec = reconstruct(crops, spec.carve);
    res.scores[static_cast<std::size_t>(node)] =
        evaluate_reconstruction(ds, spec.label, rec.grid, spec.tau_mm).surface_score;
  }
  return res;
}

std::string heatmap_csv(const HeatmapResult& h) {
  std::string out = "orbit_offset_deg,tilt_offset_deg,surface\n";
  for (int t = 0; t < h.grid; ++t)
    for (int o = 0; o < h.grid; ++o) out += fmt(h.offset_deg(o)) + "," + fmt(h.offset_deg(t)) + "," + fmt(h.score(o, t)) + "\n";
  return out;
}

Image16 heatmap_image(const HeatmapResult& h, int factor) {
  if (factor < 1) throw Error(ErrorCode::InvalidInput, "upsampling factor must be >= 1", "factor");
  const int size = (h.grid - 1) * factor + 1;
  Image16 img(size, size, 0);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double gx = static_cast<double>(x) / factor, gy = static_cast<double>(y) / factor;
      const int x0 = std::min(static_cast<int>(gx), h.grid - 2), y0 = std::min(static_cast<int>(gy), h.grid - 2);
      const double fx = gx - x0, fy = gy - y0;
      const double v = (1 - fy) * ((1 - fx) * h.score(x0, y0) + fx * h.score(x0 + 1, y0)) +
                       fy * ((1 - fx) * h.score(x0, y0 + 1) + fx * h.score(x0 + 1, y0 + 1));
      img(x, y) = static_cast<std::uint16_t>(std::lround(std::clamp(v, 0.0, 1.0) * 65535.0));
    }
  return img;
}

// ------------------------------------------------------------------ calibration QA

QaSummary paired_qa(const std::vector<CalibrationResult>& reports) {
  std::vector<double> px;
  QaSummary s;
  for (const auto& r : reports) {
    px.insert(px.end(), r.residuals_px.begin(), r.residuals_px.end());
    ++s.images;
  }
  if (px.empty()) throw Error(ErrorCode::EmptySummary, "no calibration residuals to summarize", "reports");
  s.points = px.size();
  const MeanSd a = mean_sd(px);
  s.mean_px = a.mean;
  s.sd_px = a.sd;
  s.median_px = percentile(px, 0.5);
  // every report may carry its own pitch, so mm statistics use per-point values
  std::vector<double> mm;
  for (const auto& r : reports)
    for (double x : r.residuals_px) mm.push_back(x * r.pixel_pitch_mm);
  const MeanSd b = mean_sd(mm);
  s.mean_mm = b.mean;
  s.sd_mm = b.sd;
  s.median_mm = percentile(mm, 0.5);
  return s;
}

Json qa_json(const QaSummary& s) {
  return Json{{"images", s.images},       {"points", s.points},       {"mean_px", s.mean_px},
              {"sd_px", s.sd_px},         {"median_px", s.median_px}, {"mean_mm", s.mean_mm},
              {"sd_mm", s.sd_mm},         {"median_mm", s.median_mm}};
}

CalibrationScene random_calibration_scene(std::mt19937_64& rng, const Pose& detector) {
  const double margin_px = 15.0;
  for (int attempt = 0; attempt < 10000; ++attempt) {
    CalibrationScene s;
    s.beads = random_bead_layout(rng, Point3::Zero(), Point3(55.0, 55.0, 55.0), {}, 18.0, 0.0);
    s.pose = detector;
    s.pose.orbit_deg = uniform(rng, -180.0, 180.0);
    s.pose.tilt_deg = uniform(rng, -30.0, 30.0);
    s.pose.center_mm = Point3::Zero();
    s.pose.view_class = ViewClass::MISC;
    s.cam = camera_from_pose(s.pose);
    const Point3 x_o = s.pose.source_position();
    const double f_px = s.pose.focal_len_mm / s.pose.pixel_pitch_mm;
    std::vector<double> radius;
    bool ok = true;
    for (const auto& b : s.beads) {
      const Point2 p = project(s.cam, b.center);
      const double r = 0.5 * b.diameter_mm, d = (b.center - x_o).norm();
      radius.push_back(f_px * r / std::sqrt(d * d - r * r));
      s.projections.push_back(p);
      ok = ok && p.x() >= margin_px && p.y() >= margin_px && p.x() <= detector.detector_width_px - margin_px &&
           p.y() <= detector.detector_height_px - margin_px;
    }
    for (std::size_t i = 0; ok && i < s.projections.size(); ++i)
      for (std::size_t j = i + 1; ok && j < s.projections.size(); ++j)
        ok = (s.projections[i] - s.projections[j]).norm() >= radius[i] + radius[j] + 4.0;
    if (!ok) continue;
    for (const auto& b : s.beads) {
      s.fiducials.points3d.push_back(b.center);
      s.fiducials.classes.push_back(b.reference ? BeadClass::REFERENCE : BeadClass::STANDARD);
    }
    DrrImage img{detector.detector_width_px, detector.detector_height_px, detector.pixel_pitch_mm,
                 ImageD(detector.detector_width_px, detector.detector_height_px, 0.0)};
    add_beads(img, s.cam, s.beads, kBeadAttenuation);
    s.image = std::move(img.raw);
    return s;
  }
  throw Error(ErrorCode::InvalidInput, "could not draw a valid calibration scene", "scene");
}

SceneCalibration calibrate_scene(const CalibrationScene& scene, double noise_px, std::mt19937_64& rng) {
  std::vector<Detection> dets = detect_fiducials(scene.image);
  for (auto& d : dets) d.center += Point2(uniform(rng, -noise_px, noise_px), uniform(rng, -noise_px, noise_px));

  const std::size_t n = scene.fiducials.points3d.size();
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  FiducialSet shuffled;
  for (int i : perm) {
    shuffled.points3d.push_back(scene.fiducials.points3d[static_cast<std::size_t>(i)]);
    shuffled.classes.push_back(scene.fiducials.classes[static_cast<std::size_t>(i)]);
  }

  SceneCalibration out;
  out.detections = dets.size();
  Correspondence corr;
  out.result = calibrate_detections(dets, shuffled, scene.pose.pixel_pitch_mm, &corr);
  out.x_o_error_mm = (out.result.decomposition.x_o - scene.pose.source_position()).norm();

  // the reference points the search saw, in the order calibrate_detections uses
  const auto ref_ids = shuffled.indices_of(BeadClass::REFERENCE);
  std::vector<const Detection*> refs;
  for (const auto& d : dets)
    if (d.bead_class == BeadClass::REFERENCE) refs.push_back(&d);
  std::stable_sort(refs.begin(), refs.end(), [](const Detection* a, const Detection* b) { return a->score > b->score; });
  refs.resize(std::min(refs.size(), ref_ids.size()));
  out.correspondence_correct = refs.size() == ref_ids.size() && corr.assignment.size() == refs.size();
  for (std::size_t j = 0; out.correspondence_correct && j < refs.size(); ++j) {
    std::size_t truth = 0;
    for (std::size_t i = 1; i < n; ++i)
      if ((scene.projections[i] - refs[j]->center).norm() < (scene.projections[truth] - refs[j]->center).norm()) truth = i;
    const int matched = ref_ids[static_cast<std::size_t>(corr.assignment[j])];
    out.correspondence_correct = perm[static_cast<std::size_t>(matched)] == static_cast<int>(truth);
  }
  return out;
}

}  // namespace frk
