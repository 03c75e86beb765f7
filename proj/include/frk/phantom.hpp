#pragma once

// Analytic phantoms: unions of solid primitives with HU values and label ids,
// plus declared fiducial beads (rendered analytically, never voxelized).

#include <frk/geometry.hpp>
#include <frk/volume.hpp>

#include <cstdint>
#include <random>
#include <utility>
#include <variant>
#include <vector>

namespace frk {

struct Sphere {
  Point3 center = Point3::Zero();
  double radius = 1.0;
};

/// Oriented box: local axes are the columns of `rotation`.
struct Box {
  Point3 center = Point3::Zero();
  Point3 half_extents = Point3::Ones();
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
};

/// Solid capped cylinder between two end points.
struct Cylinder {
  Point3 p0 = Point3::Zero();
  Point3 p1 = Point3::UnitZ();
  double radius = 1.0;
};

using Shape = std::variant<Sphere, Box, Cylinder>;

struct Primitive {
  Shape shape;
  double hu = 400.0;
  std::uint8_t label = 0;
};

struct Bead {
  Point3 center = Point3::Zero();
  double diameter_mm = 5.0;
  bool reference = true;  ///< 5 mm reference bead vs 3 mm standard bead
};

struct Phantom {
  std::vector<Primitive> primitives;
  std::vector<Bead> beads;

  /// Throws InvalidInput for non-positive extents or HU outside [-1024, 3071].
  void validate() const;
  Phantom transformed(const Isometry3<double>& motion) const;
  /// Bounds of all primitives (beads excluded); empty box when there are none.
  Eigen::AlignedBox3d bounds() const;
  Eigen::AlignedBox3d label_bounds(std::uint8_t id) const;
  std::vector<std::uint8_t> label_ids() const;
};

bool contains(const Shape& shape, const Point3& x);
Eigen::AlignedBox3d bounds(const Shape& shape);

/// HU volume and label volume; each voxel center takes the HU and label of the
/// last primitive containing it. Uncovered voxels are 0 / 0.
std::pair<VolumeHU, VolumeLabels> rasterize_phantom(const Phantom& ph, const Lattice& lattice);

/// Voxels of `lattice` whose rasterized label equals `id`.
VolumeLabels rasterize_label(const Phantom& ph, std::uint8_t id, const Lattice& lattice);

/// Lattice whose voxel cells cover the phantom bounds plus `margin_mm`.
Lattice lattice_around(const Phantom& ph, double spacing_mm, double margin_mm = 5.0);

/// Deterministic uniform double in [0, 1) from 53 bits of the engine.
inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }
inline double uniform(std::mt19937_64& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }
/// Uniform integer in [0, n).
inline std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
  return static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n));
}

/// Lumbar-like vertebra: cylindrical body, pedicles, lamina, caudally inclined
/// spinous process and tube-shaped transverse processes. `center` is the
/// center of the vertebral body.
std::vector<Primitive> vertebra_primitives(const Point3& center, std::uint8_t label, double scale = 1.0);

/// Five stacked vertebrae labeled 1..5 (L1..L5) with slight lordosis, and
/// optionally 14 beads (7 reference, 7 standard) placed around the column.
Phantom lumbar_phantom(int levels = 5, bool with_beads = true, std::uint64_t bead_seed = 7);

/// Body center of vertebra `level` (1-based) in lumbar_phantom.
Point3 lumbar_level_center(int level);

/// 14 beads inside an ellipsoid around `center`, at least `min_separation_mm`
/// apart and `clearance` away from the given obstacle boxes.
std::vector<Bead> random_bead_layout(std::mt19937_64& rng, const Point3& center, const Point3& semi_axes,
                                     const std::vector<Eigen::AlignedBox3d>& obstacles = {},
                                     double min_separation_mm = 18.0, double clearance_mm = 4.0);

Phantom sphere_phantom(const Point3& center, double radius, std::uint8_t label = 1, double hu = 800.0);

/// Asymmetric L-shaped object (two boxes) whose centroid differs from its
/// bounding-box center.
Phantom l_shape_phantom(const Point3& corner, std::uint8_t label = 1, double hu = 800.0);

}  // namespace frk
