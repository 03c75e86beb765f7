#pragma once

// Per-vertebra localization from projected label masks: bounding box with a
// 10% margin, square crop resampled to 224x224 and the matching camera.

#include <frk/geometry.hpp>
#include <frk/image.hpp>
#include <frk/volume.hpp>

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

namespace frk {

inline constexpr int kCropSize = 224;

/// Axis-aligned box in continuous pixel coordinates (a pixel u spans [u, u+1)).
struct PixelBox {
  double u_min = 0.0;
  double v_min = 0.0;
  double w = 0.0;
  double h = 0.0;

  Point2 center() const { return {u_min + 0.5 * w, v_min + 0.5 * h}; }
  friend bool operator==(const PixelBox&, const PixelBox&) = default;
};

/// Tight box around nonzero pixels; nullopt for an empty mask.
std::optional<PixelBox> tight_box(const Image8& mask);

/// Tight box grown by 5% of max(w, h) on each edge, clamped to the image.
std::optional<PixelBox> boxes_from_mask(const Image8& mask);

struct CropWindow {
  std::uint8_t label = 0;
  PixelBox box;
  double square_side = 0.0;
  Crop crop;
  CameraMatrix adjusted;
  ImageD image;  ///< kCropSize x kCropSize, bilinear
  Image8 mask;   ///< kCropSize x kCropSize, bilinear coverage >= 0.5; empty if no mask was given
};

/// Bilinear resample of the square window (t_x, t_y, side) to size x size;
/// samples outside the source read as 0.
ImageD resample_window(const ImageD& img, double t_x, double t_y, double side, int size = kCropSize);

/// Square window of side max(w, h) centered on `box`. Throws TooSmall when the
/// side is below 8 px.
CropWindow crop_vertebra(const ImageD& img, const CameraMatrix& cam, const PixelBox& box,
                         const Image8* mask = nullptr, int size = kCropSize);

/// One crop per label whose tight box touches no image edge, in label order.
std::vector<CropWindow> localize_masks(const ImageD& img, const CameraMatrix& cam,
                                       const std::map<std::uint8_t, Image8>& masks);

/// Renders each label's mask and localizes it.
std::vector<CropWindow> localize_all(const ImageD& img, const CameraMatrix& cam, const VolumeLabels& labels);

}  // namespace frk
