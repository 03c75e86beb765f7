#pragma once

// Entry points shared by the CLI and the HTTP service, so both produce
// byte-identical artifacts from the same inputs.

#include <frk/carve.hpp>
#include <frk/drr.hpp>
#include <frk/metrics.hpp>
#include <frk/volume.hpp>

#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace frk {

using AnyVolume = std::variant<VolumeHU, VolumeLabels>;

AnyVolume load_any_volume(const std::filesystem::path& header_path);
AnyVolume decode_any_volume(const std::string& header, const std::string& raw);
const Lattice& lattice_of(const AnyVolume& v);

struct RenderSettings {
  int width = 448;
  int height = 448;
  std::optional<double> step_mm;  ///< half the smallest spacing when unset
  double pixel_pitch_mm = 0.66;
  std::optional<std::uint8_t> label;  ///< label volumes only: render that label's silhouette
};

struct RenderedImage {
  std::string pgm;  ///< P5 bytes: 16-bit DRR or 8-bit {0, 255} mask
  int width = 0;
  int height = 0;
  double raw_min = 0.0;
  double raw_max = 0.0;
  bool is_mask = false;
};

/// HU volumes render the thresholded-bone DRR. Label volumes render the
/// silhouette of `label` when given, else the DRR of the nonzero indicator.
RenderedImage render_image(const AnyVolume& vol, const CameraMatrix& cam, const RenderSettings& s);

/// Full-detector silhouettes (any nonzero pixel) with their cameras: crop,
/// estimate the origin and carve.
Reconstruction reconstruct_images(const std::vector<Image16>& views, const std::vector<CameraMatrix>& cams,
                                  const CarveOptions& opts = {});

struct EncodedVolume {
  std::string header;
  std::string raw;
  std::string id() const { return content_hash(header + raw); }
};

EncodedVolume encode_volume(const VolumeLabels& v);
EncodedVolume encode_volume(const VolumeHU& v);

/// Scores `pred` against voxels of `gt` equal to `label` (any nonzero voxel
/// when unset). Both grids are resampled onto `pred`'s lattice grown to cover
/// the reference object.
MetricsReport evaluate_prediction(const VolumeLabels& pred, const VolumeLabels& gt, std::optional<std::uint8_t> label,
                                  double tau_mm = 1.0);

}  // namespace frk
