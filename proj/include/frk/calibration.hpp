#pragma once

// Fiducial-based calibration of a single projection image:
// detect beads -> search the reference-bead correspondence -> DLT ->
// rectify all correspondences -> final DLT, plus bead inpainting.

#include <frk/geometry.hpp>
#include <frk/image.hpp>

#include <span>
#include <vector>

namespace frk {

enum class BeadClass { REFERENCE, STANDARD };

/// Known 3D bead layout, typically 7 reference (5 mm) and 7 standard (3 mm) beads.
struct FiducialSet {
  std::vector<Point3> points3d;
  std::vector<BeadClass> classes;

  std::vector<int> indices_of(BeadClass c) const;
  void validate() const;
};

struct Detection {
  Point2 center = Point2::Zero();
  double radius_px = 0.0;
  double score = 0.0;  ///< Hough support, fraction of the circumference
  BeadClass bead_class = BeadClass::STANDARD;
};

struct DetectOptions {
  double r_min_px = 2.5;
  double r_max_px = 10.0;
  bool dark_beads = false;    ///< real radiographs show beads dark; DRRs bright
  double threshold = 0.25;    ///< on the image rescaled to [0, 1]
  double min_support = 0.35;  ///< minimum Hough support to accept a circle
  /// Radius separating 5 mm from 3 mm beads; 6 px sits between their
  /// projections at magnification 2 and 0.66 mm pitch (7.6 px vs 4.5 px).
  double reference_split_px = 6.0;
};

/// Circle centers of bead blobs by thresholding and circular Hough voting,
/// refined by a background-subtracted intensity centroid. Sorted by support;
/// detections closer than 2 px are merged.
std::vector<Detection> detect_fiducials(const ImageD& img, const DetectOptions& opts = {});

/// DLT with similarity normalization of both point sets. Throws
/// InsufficientPoints (< 6) or DegenerateConfiguration (coplanar 3D points).
CameraMatrix solve_dlt(std::span<const Point2> points2d, std::span<const Point3> points3d);

std::vector<double> reprojection_errors(const CameraMatrix& cam, std::span<const Point2> points2d,
                                        std::span<const Point3> points3d);

struct Correspondence {
  /// assignment[j] = index into the 3D list matched with 2D point j
  std::vector<int> assignment;
  CameraMatrix camera;
  double mean_error_px = 0.0;
};

/// Exhaustive search over injective 2D->3D assignments of the reference
/// beads; the assignment with the smallest mean reprojection error wins, ties
/// broken by the lexicographically smallest assignment.
Correspondence resolve_correspondence(std::span<const Point3> ref3d, std::span<const Point2> ref2d);

struct CalibrationResult {
  CameraMatrix camera;
  Decomposition decomposition;
  std::vector<int> point_ids;      ///< 3D fiducial index per residual
  std::vector<int> detection_ids;  ///< 2D detection index per residual
  std::vector<double> residuals_px;
  double mean_px = 0.0;
  double median_px = 0.0;
  double sd_px = 0.0;
  double pixel_pitch_mm = 1.0;
  double mean_mm = 0.0;
  double median_mm = 0.0;
};

/// Matches projections of every 3D bead under `preliminary` to detections
/// (mutual nearest neighbours within `gate_px`) and re-solves the DLT on all
/// matched pairs.
CalibrationResult rectify_all(const CameraMatrix& preliminary, std::span<const Point3> all3d,
                              std::span<const Point2> detected, double pixel_pitch_mm, double gate_px = 10.0);

/// Full single-image pipeline on already-detected beads.
/// `correspondence`, when given, receives the reference search result;
/// its assignment indexes the reference subset of `fiducials`.
CalibrationResult calibrate_detections(const std::vector<Detection>& detections, const FiducialSet& fiducials,
                                       double pixel_pitch_mm, Correspondence* correspondence = nullptr);

CalibrationResult calibrate_image(const ImageD& img, const FiducialSet& fiducials, const DetectOptions& opts,
                                  double pixel_pitch_mm);

/// Replaces pixels within radius_scale * radius of each detection by a fill
/// marched inward from the surrounding known pixels and then relaxed to the
/// harmonic (8-neighbour mean) solution. Other pixels are untouched.
ImageD inpaint_fiducials(const ImageD& img, const std::vector<Detection>& detections, double radius_scale = 1.5);
Image16 inpaint_fiducials(const Image16& img, const std::vector<Detection>& detections, double radius_scale = 1.5);

}  // namespace frk
