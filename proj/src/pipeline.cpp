#include <frk/pipeline.hpp>

#include <frk/localize.hpp>

#include <algorithm>

namespace frk {

AnyVolume load_any_volume(const std::filesystem::path& header_path) {
  return decode_any_volume(read_file(header_path), read_file(raw_path_for(header_path)));
}

AnyVolume decode_any_volume(const std::string& header, const std::string& raw) {
  if (peek_volume_dtype_bytes(header) == DType::Int16) return decode_volume_hu(header, raw);
  return decode_volume_labels(header, raw);
}

const Lattice& lattice_of(const AnyVolume& v) {
  return std::visit([](const auto& x) -> const Lattice& { return x.lattice; }, v);
}

RenderedImage render_image(const AnyVolume& vol, const CameraMatrix& cam, const RenderSettings& s) {
  if (s.width < 1 || s.height < 1) throw Error(ErrorCode::InvalidInput, "width and height must be >= 1", "width");
  const double step = s.step_mm ? *s.step_mm : default_step(lattice_of(vol));
  if (!(step > 0.0) || !std::isfinite(step)) throw Error(ErrorCode::InvalidInput, "step_mm must be > 0", "step_mm");

  RenderedImage out;
  out.width = s.width;
  out.height = s.height;
  const auto* labels = std::get_if<VolumeLabels>(&vol);
  if (s.label) {
    if (!labels) throw Error(ErrorCode::InvalidInput, "label rendering needs a uint8 label volume", "label");
    const Image8 mask = render_mask(*labels, *s.label, cam, s.width, s.height, step);
    out.pgm = encode_pgm(to_mask8(mask));
    out.is_mask = true;
    const auto [lo, hi] = std::minmax_element(mask.data.begin(), mask.data.end());
    out.raw_min = *lo;
    out.raw_max = *hi;
    return out;
  }

  VolumeF att;
  if (labels) {
    att = VolumeF(labels->lattice, 0.0f);
    for (std::size_t i = 0; i < labels->size(); ++i) att.data[i] = labels->data[i] ? 1.0f : 0.0f;
  } else {
    att = threshold_bone(std::get<VolumeHU>(vol), 0.0);
  }
  const DrrImage drr = render_drr(att, cam, s.width, s.height, step, s.pixel_pitch_mm);
  out.pgm = encode_pgm(drr.normalized());
  const auto [lo, hi] = std::minmax_element(drr.raw.data.begin(), drr.raw.data.end());
  out.raw_min = *lo;
  out.raw_max = *hi;
  return out;
}

Reconstruction reconstruct_images(const std::vector<Image16>& views, const std::vector<CameraMatrix>& cams,
                                  const CarveOptions& opts) {
  if (views.size() != cams.size())
    throw Error(ErrorCode::InvalidInput,
                std::to_string(views.size()) + " views but " + std::to_string(cams.size()) + " cameras", "cams");
  if (views.size() < 2) throw Error(ErrorCode::InsufficientViews, "reconstruction needs at least 2 views", "views");
  std::vector<CropWindow> crops;
  for (std::size_t v = 0; v < views.size(); ++v) {
    Image8 mask(views[v].width, views[v].height, 0);
    for (std::size_t i = 0; i < mask.size(); ++i) mask.data[i] = views[v].data[i] ? 1 : 0;
    auto c = localize_masks(to_double(views[v]), cams[v], {{1, mask}});
    if (c.empty())
      throw Error(ErrorCode::InvalidInput, "object in view " + std::to_string(v) + " is empty or touches the border",
                  "views");
    crops.push_back(std::move(c.front()));
  }
  return reconstruct(crops, opts);
}

EncodedVolume encode_volume(const VolumeLabels& v) {
  return {volume_header_json(v.lattice, DType::UInt8), encode_volume_raw(v)};
}

EncodedVolume encode_volume(const VolumeHU& v) { return {volume_header_json(v.lattice, DType::Int16), encode_volume_raw(v)}; }

MetricsReport evaluate_prediction(const VolumeLabels& pred, const VolumeLabels& gt, std::optional<std::uint8_t> label,
                                  double tau_mm) {
  VolumeLabels ref = gt;
  std::uint8_t id = 1;
  if (label) {
    id = *label;
  } else {
    for (auto& x : ref.data) x = x ? 1 : 0;
  }
  Eigen::AlignedBox3d obj = label_bounds(ref, id);
  if (obj.isEmpty()) throw Error(ErrorCode::EmptySurface, "reference object is empty", "label");
  const Point3 half = 0.5 * ref.lattice.spacing_mm;
  obj = Eigen::AlignedBox3d(obj.min() - half, obj.max() + half);
  const Lattice eval = expand_to_cover(pred.lattice, obj);
  return evaluate_grids(embed(pred, eval), ground_truth_grid(ref, id, eval), tau_mm);
}

}  // namespace frk
