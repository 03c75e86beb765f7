#pragma once

// Volume overlap and surface-distance metrics on binary grids.

#include <frk/geometry.hpp>
#include <frk/volume.hpp>

#include <span>
#include <string>
#include <vector>

namespace frk {

struct OverlapCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
};

struct Overlap {
  double f1 = 0.0;
  double iou = 0.0;
  OverlapCounts counts;
};

/// F1 = 2TP / (2TP + FP + FN), IoU = TP / (TP + FP + FN); both 1 when both
/// grids are empty. Throws IncompatibleGrids unless the lattices are equal.
Overlap voxel_overlap(const VolumeLabels& pred, const VolumeLabels& gt);

/// Centers of occupied voxels with at least one empty 6-neighbour; voxels
/// outside the grid count as empty.
std::vector<Point3> extract_surface(const VolumeLabels& grid);

/// Distance from every point of `from` to its nearest point in `to`, via a
/// uniform hash grid. Exact: identical to a brute-force scan.
std::vector<double> nearest_distances(std::span<const Point3> from, std::span<const Point3> to);

/// Linear interpolation between order statistics at rank p * (n - 1).
double percentile(std::vector<double> values, double p);

struct SurfaceDistances {
  double asd_mm = 0.0;
  double hd95_mm = 0.0;
  std::vector<double> a_to_b;
  std::vector<double> b_to_a;
};

/// ASD = mean of the two directed means; HD95 = max of the two directed 95th
/// percentiles. Throws EmptySurface for an empty set.
SurfaceDistances surface_distances(std::span<const Point3> a, std::span<const Point3> b);

struct SurfaceScore {
  double precision = 0.0;
  double recall = 0.0;
  double score = 0.0;
};

/// F-score of surface points at distance threshold tau (<= tau counts).
SurfaceScore surface_score_detail(std::span<const Point3> pred, std::span<const Point3> gt, double tau_mm);
double surface_score(std::span<const Point3> pred, std::span<const Point3> gt, double tau_mm = 1.0);

struct DistanceMap {
  std::vector<Point3> points;   ///< prediction surface voxel centers
  std::vector<double> dist_mm;  ///< unclipped distance to the reference surface
  double clip_mm = 9.0;

  /// Distances clipped at clip_mm for display.
  std::vector<double> display_mm() const;
  /// "x_mm,y_mm,z_mm,dist_mm" rows.
  std::string to_csv() const;
  /// uint8 volume on `lattice`: 0 off-surface, 1 + round(254 * min(d, clip) / clip) on it.
  VolumeLabels display_volume(const Lattice& lattice) const;
};

DistanceMap distance_map(const VolumeLabels& pred, const VolumeLabels& gt, double clip_mm = 9.0);

struct MetricsReport {
  double f1 = 0.0;
  double iou = 0.0;
  double surface_score = 0.0;
  double tau_mm = 1.0;
  double asd_mm = 0.0;
  double hd95_mm = 0.0;
  OverlapCounts counts;
  std::size_t pred_surface_points = 0;
  std::size_t gt_surface_points = 0;
};

MetricsReport evaluate_grids(const VolumeLabels& pred, const VolumeLabels& gt, double tau_mm = 1.0);

}  // namespace frk
