#pragma once

// Experiment orchestration: dataset generation, view-count and
// view-combination ablations, view-angle sensitivity heatmap and calibration
// quality summaries.

#include <frk/calibration.hpp>
#include <frk/carve.hpp>
#include <frk/drr.hpp>
#include <frk/json_io.hpp>
#include <frk/metrics.hpp>
#include <frk/phantom.hpp>
#include <frk/pose.hpp>

#include <array>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace frk {

/// Phantom description file: {"primitives": [...], "beads": [...]}.
Json phantom_to_json(const Phantom& ph);
Phantom phantom_from_json(const Json& j);

struct DatasetOptions {
  double spacing_mm = 0.5;        ///< voxel spacing of the rasterized phantom
  double sphere_diameter_mm = 1000.0;
  Pose detector;                  ///< detector and focal settings for every pose
  bool render_drr = true;         ///< masks only when false
  bool include_beads = false;     ///< draw the phantom's beads into DRRs
  std::uint64_t seed = 42;
};

/// One rendered view of one vertebra.
struct DatasetItem {
  std::uint8_t label = 0;
  int pose_index = 0;
  Pose pose;
  CameraMatrix cam;
  Image8 mask;  ///< 0/1 silhouette of `label`
  DrrImage drr;  ///< empty when DRRs were not rendered
  std::string mask_hash;
  std::string drr_hash;
  std::string camera_hash;
};

struct Dataset {
  Phantom phantom;
  VolumeHU hu;
  VolumeLabels labels;
  DatasetOptions options;
  std::map<std::uint8_t, std::vector<DatasetItem>> items;  ///< 28 per label, protocol order

  const DatasetItem& item(std::uint8_t label, int pose_index) const;
  /// Poses of `label` whose view class is `c`, as protocol indices.
  std::vector<int> pose_indices(ViewClass c) const;
};

/// Rasterizes the phantom and renders the 28-pose protocol around every
/// labeled vertebra (poses centered on the vertebra's bounding-box center).
Dataset build_dataset(const Phantom& ph, const DatasetOptions& opts = {});

/// Writes volumes, per-item PGMs and camera JSON, phantom.json and
/// manifest.json (with content hashes) under `out_dir`; returns the manifest.
Json write_dataset(const Dataset& ds, const std::filesystem::path& out_dir);

/// Reloads a written dataset, re-hashing every referenced file. Throws
/// HashMismatch when a file changed since the manifest was written.
Dataset load_dataset(const std::filesystem::path& manifest_path);

struct ViewPlan {
  std::string name;
  std::array<int, 4> counts{};  ///< AP, LATERAL, OBLIQUE, MISC
  int total() const { return counts[0] + counts[1] + counts[2] + counts[3]; }
};

/// Rows "2".."8" of the view-count ablation.
std::vector<ViewPlan> view_count_plans();
/// 1AP-1LAT-1OB-1MISC, 2AP-2LAT, 1AP-3LAT, 3AP-1LAT.
std::vector<ViewPlan> view_combo_plans();

struct TrialOptions {
  int trials = 20;
  std::uint64_t seed = 42;
  CarveOptions carve;
  double tau_mm = 1.0;
  bool ground_truth_origin_pair = false;  ///< also evaluate each trial with the GT origin
};

struct TrialRecord {
  std::string experiment;
  std::string plan;
  int trial = 0;
  std::uint8_t label = 0;
  std::vector<int> poses;
  MetricsReport metrics;
  bool surface_valid = true;  ///< false when the prediction was empty
  OriginMode origin = OriginMode::TRIANGULATED;
  double carve_ms = 0.0;
  std::uint64_t seed = 0;
};

/// Poses realizing `plan`: uniform without replacement within each class.
std::vector<int> realize_plan(const Dataset& ds, const ViewPlan& plan, std::mt19937_64& rng);

/// Reconstructs `label` from the given protocol poses and evaluates it
/// against the analytic ground truth on a lattice padded to cover the object.
TrialRecord run_trial(const Dataset& ds, std::uint8_t label, const std::vector<int>& poses, const CarveOptions& carve,
                      double tau_mm, bool ground_truth_origin);

/// Evaluates a reconstruction grid of `label` against the dataset phantom.
MetricsReport evaluate_reconstruction(const Dataset& ds, std::uint8_t label, const OccupancyGrid& grid, double tau_mm,
                                      bool* surface_valid = nullptr);

/// Trials of every plan. Trial t uses the same vertebra in every plan.
std::vector<TrialRecord> run_ablation(const Dataset& ds, const std::vector<ViewPlan>& plans,
                                      const std::string& experiment, const TrialOptions& opts);

/// experiment,plan,trial,f1,iou,surface,asd_mm,hd95_mm,seed
std::string trials_csv(const std::vector<TrialRecord>& rows);

struct PlanSummary {
  std::string plan;
  OriginMode origin = OriginMode::TRIANGULATED;
  int n = 0;
  double mean_f1 = 0, sd_f1 = 0, mean_iou = 0, sd_iou = 0, mean_surface = 0, sd_surface = 0;
  double mean_asd = 0, sd_asd = 0, mean_hd95 = 0, sd_hd95 = 0;
};

std::vector<PlanSummary> summarize(const std::vector<TrialRecord>& rows);
Json summary_json(const std::vector<PlanSummary>& s, std::uint64_t seed);

struct HeatmapSpec {
  std::uint8_t label = 3;
  Pose varied;                          ///< view swept over the grid (protocol AP pose by default)
  std::vector<Pose> fixed;              ///< the other views, unchanged
  int grid = 21;
  double max_deviation_deg = 20.0;
  CarveOptions carve;
  double tau_mm = 1.0;
};

/// Default spec: AP (orbit 0, tilt 0) varied; lateral (90, 0), oblique
/// (20, 0) and the first miscellaneous pose fixed, all centered on `label`.
HeatmapSpec default_heatmap_spec(const Dataset& ds, std::uint8_t label);

struct HeatmapResult {
  int grid = 21;
  double max_deviation_deg = 20.0;
  std::vector<double> scores;  ///< row-major: row = tilt offset index, column = orbit offset index
  double score(int orbit_idx, int tilt_idx) const { return scores[static_cast<std::size_t>(tilt_idx * grid + orbit_idx)]; }
  double offset_deg(int idx) const { return -max_deviation_deg + 2.0 * max_deviation_deg * idx / (grid - 1); }
};

HeatmapResult sensitivity_heatmap(const Dataset& ds, const HeatmapSpec& spec);
/// orbit_offset_deg,tilt_offset_deg,surface
std::string heatmap_csv(const HeatmapResult& h);
/// Bilinear upsampling of node scores (factor per cell), score 1 -> 65535.
Image16 heatmap_image(const HeatmapResult& h, int factor = 10);

struct QaSummary {
  std::size_t images = 0;
  std::size_t points = 0;
  double mean_px = 0, sd_px = 0, median_px = 0;
  double mean_mm = 0, sd_mm = 0, median_mm = 0;
};

/// Pools per-point residuals of all reports. Throws EmptySummary when empty.
QaSummary paired_qa(const std::vector<CalibrationResult>& reports);
Json qa_json(const QaSummary& s);

/// Synthetic calibration image with 14 beads and known camera.
struct CalibrationScene {
  FiducialSet fiducials;
  std::vector<Bead> beads;
  Pose pose;
  CameraMatrix cam;
  std::vector<Point2> projections;
  ImageD image;  ///< analytic bead line integrals
};

/// Random bead layout and random gantry pose such that all beads project
/// inside the detector with a margin and no two bead images touch.
CalibrationScene random_calibration_scene(std::mt19937_64& rng, const Pose& detector = Pose{});

struct SceneCalibration {
  CalibrationResult result;
  std::size_t detections = 0;
  bool correspondence_correct = false;  ///< reference search matched every bead to its true 3D point
  double x_o_error_mm = 0.0;           ///< decomposed source position vs the true one
};

/// Detects the scene's beads, jitters each center by uniform noise in
/// [-noise_px, noise_px] per axis, presents the fiducials in shuffled order
/// and calibrates.
SceneCalibration calibrate_scene(const CalibrationScene& scene, double noise_px, std::mt19937_64& rng);

}  // namespace frk
