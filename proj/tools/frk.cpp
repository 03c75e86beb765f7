// frk: command-line front end for rendering, calibration, localization,
// reconstruction, evaluation and the experiment harness.

#include <frk/harness.hpp>
#include <frk/localize.hpp>
#include <frk/pipeline.hpp>
#include <frk/service.hpp>

#include <CLI11.hpp>
#include <omp.h>

#include <cstdio>
#include <iostream>
#include <set>

namespace fs = std::filesystem;
using namespace frk;

namespace {

struct Globals {
  std::uint64_t seed = 42;
  std::string out;
  int threads = 0;
  std::string config;
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const std::size_t comma = s.find(',', start);
    const std::string part = s.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    if (!part.empty()) out.push_back(part);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

fs::path out_path(const Globals& g, const std::string& fallback) {
  if (!g.out.empty()) return g.out;
  return default_data_dir() / fallback;
}

void write_text(const fs::path& path, const std::string& text) {
  write_file(path, text);
  std::cerr << "wrote " << path.string() << "\n";
}

fs::path sidecar(const fs::path& image) {
  fs::path p = image;
  p.replace_extension(".json");
  return p;
}

/// Turns `--config file.json` into leading command-line arguments so that
/// explicit flags (parsed later, last one wins) override the file.
std::vector<std::string> expand_config(std::vector<std::string> args) {
  std::string path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    else if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (path.empty() || args.empty()) return args;
  const Json cfg = load_json(path);
  if (!cfg.is_object()) throw Error(ErrorCode::Format, "config must be a JSON object", "config");

  auto flags = [](const Json& obj) {
    std::vector<std::string> out;
    for (const auto& [key, value] : obj.items()) {
      if (value.is_object()) continue;
      if (value.is_boolean()) {
        if (value.get<bool>()) out.push_back("--" + key);
      } else if (value.is_string()) {
        out.push_back("--" + key + "=" + value.get<std::string>());
      } else if (value.is_array()) {
        std::string joined;
        for (const auto& v : value) joined += (joined.empty() ? "" : ",") + (v.is_string() ? v.get<std::string>() : v.dump());
        out.push_back("--" + key + "=" + joined);
      } else {
        out.push_back("--" + key + "=" + value.dump());
      }
    }
    return out;
  };

  // globals go first, subcommand keys right after the subcommand name
  static const std::set<std::string> kGlobal = {"seed", "out", "threads"};
  std::vector<std::string> globals, local;
  Json top = Json::object();
  for (const auto& [k, v] : cfg.items())
    if (!v.is_object() && kGlobal.count(k)) top[k] = v;
  globals = flags(top);
  std::size_t sub = 0;
  for (std::size_t i = 0; i < args.size(); ++i)
    if (!args[i].empty() && args[i][0] != '-' && (i == 0 || args[i - 1].rfind("--", 0) != 0 ||
                                                  args[i - 1].find('=') != std::string::npos)) {
      sub = i;
      break;
    }
  if (cfg.contains(args[sub]) && cfg[args[sub]].is_object()) local = flags(cfg[args[sub]]);
  std::vector<std::string> out(args.begin(), args.begin() + static_cast<std::ptrdiff_t>(sub));
  out.insert(out.begin(), globals.begin(), globals.end());
  out.push_back(args[sub]);
  out.insert(out.end(), local.begin(), local.end());
  out.insert(out.end(), args.begin() + static_cast<std::ptrdiff_t>(sub) + 1, args.end());
  return out;
}

Phantom phantom_by_name(const std::string& name, int levels, std::uint64_t seed) {
  if (name == "lumbar") return lumbar_phantom(levels, true, seed);
  if (name == "sphere") return sphere_phantom(Point3::Zero(), 20.0);
  if (name == "l-shape") return l_shape_phantom(Point3(-25, -5, -20));
  if (name == "empty") return Phantom{};
  return phantom_from_json(load_json(name));
}

CalibrationResult report_from_json(const Json& j) {
  CalibrationResult r;
  if (!j.contains("residuals") || !j["residuals"].is_array())
    throw Error(ErrorCode::Format, "calibration report needs 'residuals'", "residuals");
  for (const auto& e : j["residuals"]) r.residuals_px.push_back(e.at("residual_px").get<double>());
  r.pixel_pitch_mm = j.value("pixel_pitch_mm", 0.152);
  return r;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"frk: sparse-view fluoroscopic reconstruction toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  Globals g;
  app.add_option("--seed", g.seed, "random seed (recorded in outputs)");
  app.add_option("--out", g.out, "output file or directory");
  app.add_option("--threads", g.threads, "worker threads (0 = all cores)");
  app.add_option("--config", g.config, "JSON file with default flag values");

  // gen-dataset
  auto* gen = app.add_subcommand("gen-dataset", "rasterize a phantom and render the 28-pose protocol per vertebra");
  std::string gen_phantom = "lumbar";
  int gen_levels = 5;
  DatasetOptions gen_opts;
  bool gen_no_drr = false;
  gen->add_option("--phantom", gen_phantom, "lumbar | sphere | l-shape | empty | path to phantom JSON");
  gen->add_option("--levels", gen_levels, "vertebrae in the lumbar phantom")->check(CLI::Range(1, 5));
  gen->add_option("--spacing-mm", gen_opts.spacing_mm, "voxel spacing");
  gen->add_option("--sphere-mm", gen_opts.sphere_diameter_mm, "pose sphere diameter");
  gen->add_flag("--no-drr", gen_no_drr, "masks only");
  gen->add_flag("--beads", gen_opts.include_beads, "draw fiducial beads into DRRs");

  // render
  auto* ren = app.add_subcommand("render", "render a DRR or label silhouette");
  std::string ren_volume, ren_pose, ren_cam;
  double ren_orbit = 0, ren_tilt = 0;
  std::optional<double> ren_step;
  std::optional<int> ren_width, ren_height, ren_label;
  std::optional<double> ren_pitch;
  ren->add_option("--volume", ren_volume, "volume header (.vjson)")->required();
  ren->add_option("--pose", ren_pose, "pose JSON");
  ren->add_option("--cam", ren_cam, "camera JSON (P)");
  ren->add_option("--orbit", ren_orbit, "orbit angle in degrees (no --pose/--cam)");
  ren->add_option("--tilt", ren_tilt, "tilt angle in degrees (no --pose/--cam)");
  ren->add_option("--width", ren_width);
  ren->add_option("--height", ren_height);
  ren->add_option("--step-mm", ren_step);
  ren->add_option("--pitch-mm", ren_pitch);
  ren->add_option("--label", ren_label, "label volume: render this label's silhouette");

  // calibrate
  auto* cal = app.add_subcommand("calibrate", "detect fiducials and solve the camera matrix");
  std::string cal_image, cal_fid, cal_inpaint;
  double cal_pitch = 0.152;
  DetectOptions cal_det;
  cal->add_option("--image", cal_image)->required();
  cal->add_option("--fiducials", cal_fid)->required();
  cal->add_option("--pitch-mm", cal_pitch);
  cal->add_option("--r-min", cal_det.r_min_px);
  cal->add_option("--r-max", cal_det.r_max_px);
  cal->add_flag("--dark", cal_det.dark_beads, "beads are darker than the background");
  cal->add_option("--inpainted", cal_inpaint, "also write the bead-free image here");

  // localize
  auto* loc = app.add_subcommand("localize", "crop vertebrae and adjust the camera per crop");
  std::string loc_image, loc_cam, loc_labels;
  std::vector<std::string> loc_masks;
  loc->add_option("--image", loc_image)->required();
  loc->add_option("--cam", loc_cam)->required();
  loc->add_option("--labels", loc_labels, "label volume: render every vertebra's mask");
  loc->add_option("--masks", loc_masks, "label=mask.pgm pairs")->delimiter(',');

  // reconstruct
  auto* rec = app.add_subcommand("reconstruct", "carve an occupancy grid from calibrated silhouettes");
  std::string rec_views, rec_cams, rec_mode = "hull";
  CarveOptions rec_opts;
  rec->add_option("--views", rec_views, "comma-separated silhouette PGMs")->required();
  rec->add_option("--cams", rec_cams, "comma-separated camera JSONs")->required();
  rec->add_option("--mode", rec_mode, "hull | mean_thresh");
  rec->add_option("--tau", rec_opts.tau);
  rec->add_option("--min-views", rec_opts.min_views);
  rec->add_option("--dims", rec_opts.dims);
  rec->add_option("--voxel-mm", rec_opts.voxel_mm);

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "score a grid against a label volume");
  std::string ev_pred, ev_gt, ev_csv, ev_dist_vol;
  std::optional<int> ev_label;
  double ev_tau = 1.0, ev_clip = 9.0;
  ev->add_option("--pred", ev_pred)->required();
  ev->add_option("--gt", ev_gt)->required();
  ev->add_option("--label", ev_label);
  ev->add_option("--tau-mm", ev_tau);
  ev->add_option("--distance-csv", ev_csv);
  ev->add_option("--distance-volume", ev_dist_vol);
  ev->add_option("--clip-mm", ev_clip);

  // ablations
  std::string ab_manifest, ab_plans;
  TrialOptions ab_opts;
  std::string ab_mode = "hull";
  auto add_ablation_flags = [&](CLI::App* sc) {
    sc->add_option("--manifest", ab_manifest)->required();
    sc->add_option("--trials", ab_opts.trials);
    sc->add_option("--plans", ab_plans, "comma-separated subset of plan names");
    sc->add_option("--tau-mm", ab_opts.tau_mm);
    sc->add_option("--mode", ab_mode);
    sc->add_flag("--gt-origin", ab_opts.ground_truth_origin_pair, "also run each trial with the ground-truth origin");
  };
  auto* abv = app.add_subcommand("ablate-views", "view-count ablation");
  add_ablation_flags(abv);
  auto* abc = app.add_subcommand("ablate-combos", "view-combination ablation");
  add_ablation_flags(abc);

  // heatmap
  auto* hm = app.add_subcommand("heatmap", "view-angle sensitivity heatmap");
  std::string hm_manifest;
  int hm_label = 3, hm_grid = 21, hm_factor = 10;
  double hm_dev = 20.0;
  hm->add_option("--manifest", hm_manifest)->required();
  hm->add_option("--label", hm_label);
  hm->add_option("--grid", hm_grid);
  hm->add_option("--max-deg", hm_dev);
  hm->add_option("--upsample", hm_factor);

  // paired-qa
  auto* qa = app.add_subcommand("paired-qa", "summarize calibration residuals");
  std::vector<std::string> qa_reports;
  int qa_synthetic = 0;
  double qa_noise = 0.0;
  qa->add_option("--reports", qa_reports, "calibration report JSONs")->delimiter(',');
  qa->add_option("--synthetic", qa_synthetic, "generate and calibrate this many random scenes");
  qa->add_option("--noise-px", qa_noise, "uniform detection noise for synthetic scenes");

  // serve
  auto* srv = app.add_subcommand("serve", "run the HTTP service");
  int srv_port = 8423;
  std::string srv_host = "127.0.0.1", srv_data;
  ServiceOptions srv_opts;
  srv->add_option("--port", srv_port);
  srv->add_option("--host", srv_host);
  srv->add_option("--data-dir", srv_data);
  srv->add_option("--workers", srv_opts.workers);
  srv->add_flag("--demo", srv_opts.demo, "preload the lumbar demo volumes");

  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    args = expand_config(args);
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.code()) << "] " << e.what() << "\n";
    return 2;
  }

  if (g.threads > 0) omp_set_num_threads(g.threads);

  try {
    if (*gen) {
      gen_opts.seed = g.seed;
      gen_opts.render_drr = !gen_no_drr;
      const Phantom ph = phantom_by_name(gen_phantom, gen_levels, g.seed);
      const fs::path dir = out_path(g, "dataset");
      const Json m = write_dataset(build_dataset(ph, gen_opts), dir);
      for (const auto& w : m["warnings"]) std::cerr << "warning: " << w.get<std::string>() << "\n";
      std::cout << m["items"].size() << " items written to " << (dir / "manifest.json").string() << "\n";
    } else if (*ren) {
      const AnyVolume vol = load_any_volume(ren_volume);
      RenderSettings s;
      CameraMatrix cam;
      if (!ren_cam.empty()) {
        cam = camera_from_json(load_json(ren_cam));
      } else {
        Pose p = ren_pose.empty() ? Pose{} : pose_from_json(load_json(ren_pose));
        if (ren_pose.empty()) {
          p.orbit_deg = ren_orbit;
          p.tilt_deg = ren_tilt;
          p.center_mm = lattice_of(vol).bounds().center();
          p.validate();
        }
        cam = camera_from_pose(p);
        s.width = p.detector_width_px;
        s.height = p.detector_height_px;
        s.pixel_pitch_mm = p.pixel_pitch_mm;
      }
      if (ren_width) s.width = *ren_width;
      if (ren_height) s.height = *ren_height;
      if (ren_pitch) s.pixel_pitch_mm = *ren_pitch;
      s.step_mm = ren_step;
      if (ren_label) {
        if (*ren_label < 1 || *ren_label > 255) throw Error(ErrorCode::InvalidInput, "label must be in [1, 255]", "label");
        s.label = static_cast<std::uint8_t>(*ren_label);
      }
      const RenderedImage img = render_image(vol, cam, s);
      const fs::path out = out_path(g, "render.pgm");
      write_text(out, img.pgm);
      write_text(sidecar(out), dump_json(camera_to_json(cam)));
      std::cout << "image_id " << content_hash(img.pgm) << " raw_min " << img.raw_min << " raw_max " << img.raw_max
                << "\n";
    } else if (*cal) {
      const Image16 img = read_pgm(cal_image);
      const FiducialSet fid = fiducials_from_json(load_json(cal_fid));
      const auto dets = detect_fiducials(to_double(img), cal_det);
      const CalibrationResult r = calibrate_detections(dets, fid, cal_pitch);
      write_text(out_path(g, "calibration.json"), dump_json(calibration_to_json(r)));
      if (!cal_inpaint.empty()) write_text(cal_inpaint, encode_pgm(inpaint_fiducials(img, dets)));
      std::printf("%zu points, mean %.4f px (%.4f mm), median %.4f px\n", r.residuals_px.size(), r.mean_px, r.mean_mm,
                  r.median_px);
    } else if (*loc) {
      const ImageD img = to_double(read_pgm(loc_image));
      const CameraMatrix cam = camera_from_json(load_json(loc_cam));
      std::vector<CropWindow> crops;
      if (!loc_labels.empty()) {
        crops = localize_all(img, cam, load_volume_labels(loc_labels));
      } else {
        std::map<std::uint8_t, Image8> masks;
        for (const auto& pair : loc_masks) {
          const auto eq = pair.find('=');
          if (eq == std::string::npos) throw Error(ErrorCode::InvalidInput, "expected label=mask.pgm", "masks");
          const int label = std::stoi(pair.substr(0, eq));
          if (label < 1 || label > 255) throw Error(ErrorCode::InvalidInput, "label must be in [1, 255]", "masks");
          const Image16 m = read_pgm(pair.substr(eq + 1));
          Image8 b(m.width, m.height, 0);
          for (std::size_t i = 0; i < m.size(); ++i) b.data[i] = m.data[i] ? 1 : 0;
          masks[static_cast<std::uint8_t>(label)] = std::move(b);
        }
        crops = localize_masks(img, cam, masks);
      }
      const fs::path dir = out_path(g, "crops");
      for (const auto& c : crops) {
        const std::string stem = "crop_L" + std::to_string(c.label);
        Image16 pix(c.image.width, c.image.height, 0);
        const double mx = std::max(1e-300, *std::max_element(c.image.data.begin(), c.image.data.end()));
        for (std::size_t i = 0; i < pix.size(); ++i)
          pix.data[i] = static_cast<std::uint16_t>(std::lround(std::clamp(c.image.data[i] / mx, 0.0, 1.0) * 65535.0));
        write_text(dir / (stem + ".pgm"), encode_pgm(pix));
        if (c.mask.size()) write_text(dir / (stem + "_mask.pgm"), encode_pgm(to_mask8(c.mask)));
        write_text(dir / (stem + ".json"), dump_json(camera_to_json(c.adjusted)));
      }
      write_text(dir / "crops.json", dump_json(crop_manifest(crops)));
    } else if (*rec) {
      rec_opts.mode = carve_mode_from_string(rec_mode);
      const auto views = split_list(rec_views), cams = split_list(rec_cams);
      std::vector<Image16> imgs;
      std::vector<CameraMatrix> cm;
      for (const auto& v : views) imgs.push_back(read_pgm(v));
      for (const auto& c : cams) cm.push_back(camera_from_json(load_json(c)));
      const Reconstruction r = reconstruct_images(imgs, cm, rec_opts);
      const fs::path out = out_path(g, "grid.vjson");
      save_volume(r.grid.volume, out);
      std::printf("grid %s: %zu voxels occupied, origin %s (%.3f, %.3f, %.3f), carve %.1f ms\n",
                  encode_volume(r.grid.volume).id().c_str(), r.grid.occupied(),
                  std::string(to_string(r.grid.provenance)).c_str(), r.center.x(), r.center.y(), r.center.z(),
                  r.carve_ms);
    } else if (*ev) {
      const VolumeLabels pred = load_volume_labels(ev_pred);
      const VolumeLabels gt = load_volume_labels(ev_gt);
      std::optional<std::uint8_t> label;
      if (ev_label) label = static_cast<std::uint8_t>(*ev_label);
      const MetricsReport m = evaluate_prediction(pred, gt, label, ev_tau);
      write_text(out_path(g, "metrics.json"), dump_json(metrics_to_json(m)));
      if (!ev_csv.empty() || !ev_dist_vol.empty()) {
        VolumeLabels ref = gt;
        for (auto& x : ref.data) x = label ? (x == *label) : (x != 0);
        const DistanceMap dm = distance_map(pred, ground_truth_grid(ref, 1, pred.lattice), ev_clip);
        if (!ev_csv.empty()) write_text(ev_csv, dm.to_csv());
        if (!ev_dist_vol.empty()) save_volume(dm.display_volume(pred.lattice), ev_dist_vol);
      }
      std::printf("f1 %.4f iou %.4f surface %.4f asd %.3f mm hd95 %.3f mm\n", m.f1, m.iou, m.surface_score, m.asd_mm,
                  m.hd95_mm);
    } else if (*abv || *abc) {
      const Dataset ds = load_dataset(ab_manifest);
      ab_opts.seed = g.seed;
      ab_opts.carve.mode = carve_mode_from_string(ab_mode);
      auto plans = *abv ? view_count_plans() : view_combo_plans();
      if (!ab_plans.empty()) {
        const auto keep = split_list(ab_plans);
        std::vector<ViewPlan> sel;
        for (const auto& name : keep) {
          const auto it = std::find_if(plans.begin(), plans.end(), [&](const ViewPlan& p) { return p.name == name; });
          if (it == plans.end()) throw Error(ErrorCode::InvalidInput, "unknown plan '" + name + "'", "plans");
          sel.push_back(*it);
        }
        plans = sel;
      }
      const auto rows = run_ablation(ds, plans, *abv ? "num_views" : "combos", ab_opts);
      const fs::path dir = out_path(g, *abv ? "ablate-views" : "ablate-combos");
      write_text(dir / "trials.csv", trials_csv(rows));
      const Json summary = summary_json(summarize(rows), g.seed);
      write_text(dir / "summary.json", dump_json(summary));
      for (const auto& p : summary["plans"])
        std::printf("%-20s %-14s surface %s f1 %s\n", p["plan"].get<std::string>().c_str(),
                    p["origin"].get<std::string>().c_str(), p["surface"]["mean"].dump().c_str(),
                    p["f1"]["mean"].dump().c_str());
    } else if (*hm) {
      const Dataset ds = load_dataset(hm_manifest);
      HeatmapSpec spec = default_heatmap_spec(ds, static_cast<std::uint8_t>(hm_label));
      spec.grid = hm_grid;
      spec.max_deviation_deg = hm_dev;
      const HeatmapResult h = sensitivity_heatmap(ds, spec);
      const fs::path dir = out_path(g, "heatmap");
      write_text(dir / "heatmap.csv", heatmap_csv(h));
      write_text(dir / "heatmap.pgm", encode_pgm(heatmap_image(h, hm_factor)));
      const auto [lo, hi] = std::minmax_element(h.scores.begin(), h.scores.end());
      const auto peak = static_cast<int>(hi - h.scores.begin());
      write_text(dir / "heatmap.json",
                 dump_json(Json{{"seed", g.seed},
                                {"label", hm_label},
                                {"grid", h.grid},
                                {"max_deviation_deg", h.max_deviation_deg},
                                {"min", *lo},
                                {"max", *hi},
                                {"peak_orbit_deg", h.offset_deg(peak % h.grid)},
                                {"peak_tilt_deg", h.offset_deg(peak / h.grid)}}));
    } else if (*qa) {
      std::vector<CalibrationResult> reports;
      for (const auto& r : qa_reports) reports.push_back(report_from_json(load_json(r)));
      std::mt19937_64 rng(g.seed);
      for (int i = 0; i < qa_synthetic; ++i)
        reports.push_back(calibrate_scene(random_calibration_scene(rng), qa_noise, rng).result);
      Json j = qa_json(paired_qa(reports));
      j["seed"] = g.seed;
      write_text(out_path(g, "paired_qa.json"), dump_json(j));
      std::cout << j.dump(2) << "\n";
    } else if (*srv) {
      srv_opts.data_dir = srv_data.empty() ? default_data_dir() : fs::path(srv_data);
      std::cerr << "listening on http://" << srv_host << ":" << srv_port << "\n";
      serve(srv_opts, srv_host, srv_port);
    }
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.code()) << "]";
    if (!e.field().empty()) std::cerr << " (" << e.field() << ")";
    std::cerr << ": " << e.what() << "\n";
    return 1;
  }
  return 0;
}
