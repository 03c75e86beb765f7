#pragma once

// Ray-integral DRR rendering: I(p) = sum over samples of A(x) * step along the
// ray from the focal point through pixel p.

#include <frk/geometry.hpp>
#include <frk/image.hpp>
#include <frk/phantom.hpp>
#include <frk/volume.hpp>

#include <map>

namespace frk {

struct DrrImage {
  int width = 0;
  int height = 0;
  double pixel_pitch_mm = 0.66;
  ImageD raw;  ///< line integrals in mm * attenuation units, >= 0

  /// 16-bit image scaled so that the per-image maximum maps to 65535.
  Image16 normalized() const;
};

/// Default integration step: half the smallest voxel spacing.
double default_step(const Lattice& lattice);

/// Unit direction (world) of the ray through continuous pixel coordinate (u, v).
Point3 pixel_ray(const CameraMatrix& cam, double u, double v);

/// Throws UnsupportedConfiguration if the focal point is inside the volume and
/// InvalidInput for a non-positive step.
DrrImage render_drr(const VolumeF& attenuation, const CameraMatrix& cam, int width, int height, double step_mm,
                    double pixel_pitch_mm = 0.66);

/// Binary silhouette (0/1) of label `id`: a pixel is set when the trilinearly
/// interpolated indicator of the label reaches 0.5 somewhere along its ray.
Image8 render_mask(const VolumeLabels& labels, std::uint8_t id, const CameraMatrix& cam, int width, int height,
                   double step_mm = 0.0);

/// Analytic line integrals through solid spheres, 4x4 supersampled per pixel.
void add_beads(DrrImage& img, const CameraMatrix& cam, const std::vector<Bead>& beads, double attenuation_per_mm);

/// Attenuation per mm of steel beads; large enough that beads dominate bone.
inline constexpr double kBeadAttenuation = 1.0e5;

struct PairedRender {
  DrrImage drr;
  std::map<std::uint8_t, Image8> masks;
  std::vector<Point2> bead_projections;
};

struct PairedOptions {
  double step_mm = 0.0;  ///< 0 selects default_step
  double pixel_pitch_mm = 0.66;
  double bead_attenuation = kBeadAttenuation;
};

/// DRR with analytic beads, masks for every label present in `labels`, and the
/// projected bead centers.
PairedRender render_paired(const VolumeF& attenuation, const VolumeLabels& labels, const CameraMatrix& cam,
                           int width, int height, const std::vector<Bead>& beads, const PairedOptions& opts = {});

}  // namespace frk
