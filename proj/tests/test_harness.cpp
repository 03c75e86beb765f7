#include <doctest.h>

#include "support.hpp"

#include <frk/harness.hpp>
#include <frk/image.hpp>

#include <filesystem>
#include <fstream>
#include <set>

using namespace frk;

namespace {

std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("frk_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

DatasetOptions quick_options() {
  DatasetOptions o;
  o.spacing_mm = 1.0;
  o.render_drr = false;
  o.detector.detector_width_px = 224;
  o.detector.detector_height_px = 224;
  o.detector.pixel_pitch_mm = 1.32;
  return o;
}

const Dataset& two_level_dataset() {
  static const Dataset ds = build_dataset(lumbar_phantom(2, false), quick_options());
  return ds;
}

}  // namespace

TEST_SUITE("harness") {

TEST_CASE("phantom JSON round-trips every primitive kind") {
  std::mt19937_64 rng(61);
  Phantom ph = lumbar_phantom(2, true);
  for (int i = 0; i < 4; ++i) {
    const Phantom r = test::random_phantom(rng);
    ph.primitives.insert(ph.primitives.end(), r.primitives.begin(), r.primitives.end());
  }
  const Json j = phantom_to_json(ph);
  const Phantom back = phantom_from_json(j);
  CHECK(dump_json(phantom_to_json(back)) == dump_json(j));
  CHECK(back.beads.size() == ph.beads.size());
  Json bad = j;
  bad["primitives"][0]["hu"] = 5000;
  CHECK_THROWS_AS(phantom_from_json(bad), Error);
}

TEST_CASE("dataset has 28 protocol views per vertebra") {
  const Dataset& ds = two_level_dataset();
  REQUIRE(ds.items.size() == 2);
  for (const auto& [label, items] : ds.items) {
    REQUIRE(items.size() == 28);
    for (std::size_t i = 0; i < items.size(); ++i) {
      CHECK(items[i].pose_index == static_cast<int>(i));
      CHECK(items[i].mask.width == 224);
      CHECK(!items[i].mask_hash.empty());
    }
  }
  CHECK(ds.pose_indices(ViewClass::AP).size() == 6);
  CHECK(ds.pose_indices(ViewClass::OBLIQUE).size() == 4);
}

TEST_CASE("written dataset reloads and detects tampering") {
  const auto dir = scratch_dir("dataset");
  const Dataset& ds = two_level_dataset();
  const Json manifest = write_dataset(ds, dir);
  CHECK(manifest["items"].size() == 56);
  CHECK(manifest["warnings"].empty());

  const Dataset back = load_dataset(dir / "manifest.json");
  for (const auto& [label, items] : ds.items)
    for (std::size_t i = 0; i < items.size(); ++i) {
      CHECK(back.item(label, static_cast<int>(i)).mask == items[i].mask);
      CHECK(back.item(label, static_cast<int>(i)).mask_hash == items[i].mask_hash);
    }
  CHECK(back.labels == ds.labels);

  const std::string item_mask = manifest["items"][3]["mask"]["path"].get<std::string>();
  {
    std::fstream f(dir / item_mask, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(-1, std::ios::end);
    f.put('\x7f');
  }
  try {
    load_dataset(dir / "manifest.json");
    FAIL("expected HashMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::HashMismatch);
  }
}

TEST_CASE("empty phantom yields a warning instead of items") {
  const auto dir = scratch_dir("empty");
  const Json manifest = write_dataset(build_dataset(Phantom{}, quick_options()), dir);
  CHECK(manifest["items"].empty());
  CHECK(manifest["warnings"].size() == 1);
}

TEST_CASE("view plans") {
  const auto counts = view_count_plans();
  REQUIRE(counts.size() == 7);
  for (std::size_t i = 0; i < counts.size(); ++i) CHECK(counts[i].total() == static_cast<int>(i) + 2);
  CHECK(counts.back().counts == std::array<int, 4>{2, 2, 2, 2});
  CHECK(counts[3].counts == std::array<int, 4>{2, 1, 1, 1});
  const auto combos = view_combo_plans();
  REQUIRE(combos.size() == 4);
  CHECK(combos[0].counts == std::array<int, 4>{1, 1, 1, 1});
  CHECK(combos[2].counts == std::array<int, 4>{1, 3, 0, 0});
  CHECK(combos[3].counts == std::array<int, 4>{3, 1, 0, 0});
}

TEST_CASE("realized plans respect class counts without repeats") {
  const Dataset& ds = two_level_dataset();
  std::mt19937_64 rng(62);
  for (const auto& plan : view_count_plans()) {
    const auto poses = realize_plan(ds, plan, rng);
    CHECK(poses.size() == static_cast<std::size_t>(plan.total()));
    std::set<int> unique(poses.begin(), poses.end());
    CHECK(unique.size() == poses.size());
    std::array<int, 4> seen{};
    for (int p : poses) ++seen[static_cast<int>(ds.item(1, p).pose.view_class)];
    CHECK(seen == plan.counts);
  }
}

TEST_CASE("ablation output is deterministic for a fixed seed") {
  const Dataset& ds = two_level_dataset();
  TrialOptions opts;
  opts.trials = 2;
  opts.carve.dims = 48;
  opts.carve.voxel_mm = 1.25;
  opts.ground_truth_origin_pair = true;
  const std::vector<ViewPlan> plans{view_count_plans()[0], view_count_plans()[2]};
  const auto a = run_ablation(ds, plans, "views", opts);
  const auto b = run_ablation(ds, plans, "views", opts);
  CHECK(a.size() == 8);
  const std::string csv = trials_csv(a);
  CHECK(csv == trials_csv(b));
  CHECK(csv.rfind("experiment,plan,trial,f1,iou,surface,asd_mm,hd95_mm,seed\n", 0) == 0);
  opts.seed = 43;
  CHECK(trials_csv(run_ablation(ds, plans, "views", opts)) != csv);

  const auto summary = summarize(a);
  CHECK(summary.size() == 4);
  for (const auto& s : summary) CHECK(s.n == 2);
  const Json j = summary_json(summary, 42);
  CHECK(j["seed"] == 42);
  CHECK(j["plans"].size() == 4);
}

TEST_CASE("heatmap node count and outputs") {
  const Dataset& ds = two_level_dataset();
  HeatmapSpec spec = default_heatmap_spec(ds, 1);
  spec.grid = 3;
  spec.max_deviation_deg = 4.0;
  spec.carve.dims = 48;
  spec.carve.voxel_mm = 1.25;
  const HeatmapResult h = sensitivity_heatmap(ds, spec);
  CHECK(h.scores.size() == 9);
  CHECK(h.offset_deg(0) == -4.0);
  CHECK(h.offset_deg(2) == 4.0);
  for (double s : h.scores) CHECK((s >= 0.0 && s <= 1.0));
  const std::string csv = heatmap_csv(h);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 10);
  const Image16 img = heatmap_image(h, 5);
  CHECK(img.width == 11);  // (grid - 1) * factor + 1
}

TEST_CASE("paired QA pools residuals and converts with the pitch") {
  CHECK_THROWS_AS(paired_qa({}), Error);
  CalibrationResult r;
  r.residuals_px = {1.0, 2.0, 3.0};
  r.pixel_pitch_mm = 0.152;
  CalibrationResult s = r;
  s.residuals_px = {4.0};
  const QaSummary q = paired_qa({r, s});
  CHECK(q.images == 2);
  CHECK(q.points == 4);
  CHECK(q.mean_px == doctest::Approx(2.5));
  CHECK(q.median_px == doctest::Approx(2.5));
  CHECK(q.mean_mm == doctest::Approx(2.5 * 0.152));
  CHECK(q.sd_px == doctest::Approx(std::sqrt(5.0 / 3.0)));
}

TEST_CASE("synthetic calibration scene is solved") {
  std::mt19937_64 rng(63);
  const CalibrationScene scene = random_calibration_scene(rng);
  CHECK(scene.beads.size() == 14);
  const SceneCalibration c = calibrate_scene(scene, 0.0, rng);
  CHECK(c.detections == 14);
  CHECK(c.correspondence_correct);
  CHECK(c.result.mean_px < 0.1);
  CHECK(c.x_o_error_mm < 1.0);
}

}  // TEST_SUITE
