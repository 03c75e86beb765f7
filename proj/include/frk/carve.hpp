#pragma once

// Silhouette carving on a 128^3 cube placed at the triangulated (or ground
// truth) vertebra origin.

#include <frk/geometry.hpp>
#include <frk/localize.hpp>
#include <frk/phantom.hpp>
#include <frk/volume.hpp>

#include <optional>
#include <string_view>
#include <vector>

namespace frk {

enum class OriginMode { TRIANGULATED, GROUND_TRUTH };
enum class CarveMode { HULL, MEAN_THRESH };

std::string_view to_string(OriginMode m);
std::string_view to_string(CarveMode m);
CarveMode carve_mode_from_string(std::string_view s);

struct CarveOptions {
  CarveMode mode = CarveMode::HULL;
  double tau = 0.15;   ///< MEAN_THRESH: threshold on the mean normalized sample
  int min_views = 0;   ///< MEAN_THRESH: views that must see the voxel; 0 = all
  int dims = 128;
  double voxel_mm = 0.625;
};

struct OccupancyGrid {
  VolumeLabels volume;  ///< 0/1
  OriginMode provenance = OriginMode::TRIANGULATED;

  const Lattice& lattice() const { return volume.lattice; }
  std::size_t occupied() const;
  double occupied_fraction() const;
};

/// One view to carve from: image in the frame of `cam` (crop or full image).
struct CarveView {
  ImageD image;
  CameraMatrix cam;
};

/// Cube of dims^3 voxels centered near `center`. The corner is snapped to
/// integer multiples of voxel_mm so cubes built around different centers
/// share voxel positions.
Lattice cube_lattice(const Point3& center, int dims = 128, double voxel_mm = 0.625);

/// Triangulates the ray through the center of every crop.
Point3 estimate_origin(const std::vector<CropWindow>& crops);
Point3 estimate_origin(const std::vector<CameraMatrix>& adjusted, int crop_size = kCropSize);

/// Nearest-neighbour back-projection of every voxel center. HULL keeps voxels
/// sampled > 0 in every view; MEAN_THRESH keeps voxels seen by at least
/// min_views views whose mean per-view max-normalized sample is >= tau.
/// Projections outside an image sample 0 and do not count as seen.
OccupancyGrid carve(const std::vector<CarveView>& views, const Lattice& cube, const CarveOptions& opts = {});

struct Reconstruction {
  OccupancyGrid grid;
  Point3 center = Point3::Zero();  ///< the estimated or given object center
  double origin_ms = 0.0;
  double carve_ms = 0.0;
};

/// estimate_origin (unless `ground_truth_center` is set) followed by carve
/// on the crops' masks (HULL) or crop images (MEAN_THRESH).
Reconstruction reconstruct(const std::vector<CropWindow>& crops, const CarveOptions& opts = {},
                           const std::optional<Point3>& ground_truth_center = std::nullopt);

/// Same from already cropped views and their adjusted cameras.
Reconstruction reconstruct_views(const std::vector<CarveView>& views, const CarveOptions& opts = {},
                                 const std::optional<Point3>& ground_truth_center = std::nullopt);

/// Ground truth object on `lattice`: analytic point-in-primitive test at voxel
/// centers.
VolumeLabels ground_truth_grid(const Phantom& ph, std::uint8_t label, const Lattice& lattice);
/// Ground truth object on `lattice` by nearest-neighbour lookup in a label volume.
VolumeLabels ground_truth_grid(const VolumeLabels& labels, std::uint8_t label, const Lattice& lattice);

/// `lattice` grown by whole voxels until it also covers `box`.
Lattice expand_to_cover(const Lattice& lattice, const Eigen::AlignedBox3d& box);

/// Copies `grid` into a larger lattice with the same spacing and phase.
VolumeLabels embed(const VolumeLabels& grid, const Lattice& target);

}  // namespace frk
