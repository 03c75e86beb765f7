#include <frk/drr.hpp>
#include <frk/localize.hpp>

#include <algorithm>
#include <cmath>

namespace frk {

std::optional<PixelBox> tight_box(const Image8& mask) {
  int u0 = mask.width, v0 = mask.height, u1 = -1, v1 = -1;
  for (int v = 0; v < mask.height; ++v)
    for (int u = 0; u < mask.width; ++u)
      if (mask(u, v)) {
        u0 = std::min(u0, u), u1 = std::max(u1, u);
        v0 = std::min(v0, v), v1 = std::max(v1, v);
      }
  if (u1 < 0) return std::nullopt;
  return PixelBox{static_cast<double>(u0), static_cast<double>(v0), static_cast<double>(u1 - u0 + 1),
                  static_cast<double>(v1 - v0 + 1)};
}

std::optional<PixelBox> boxes_from_mask(const Image8& mask) {
  const auto tight = tight_box(mask);
  if (!tight) return std::nullopt;
  const double margin = 0.05 * std::max(tight->w, tight->h);
  const double u0 = std::max(0.0, tight->u_min - margin);
  const double v0 = std::max(0.0, tight->v_min - margin);
  const double u1 = std::min(static_cast<double>(mask.width), tight->u_min + tight->w + margin);
  const double v1 = std::min(static_cast<double>(mask.height), tight->v_min + tight->h + margin);
  return PixelBox{u0, v0, u1 - u0, v1 - v0};
}

namespace {

template <typename Fetch>
double bilinear(double x, double y, int w, int h, Fetch fetch) {
  // continuous coordinate -> index space where pixel centers are integers
  const double fx = x - 0.5, fy = y - 0.5;
  const int x0 = static_cast<int>(std::floor(fx)), y0 = static_cast<int>(std::floor(fy));
  const double ax = fx - x0, ay = fy - y0;
  auto at = [&](int u, int v) { return (u < 0 || v < 0 || u >= w || v >= h) ? 0.0 : fetch(u, v); };
  return (1 - ay) * ((1 - ax) * at(x0, y0) + ax * at(x0 + 1, y0)) +
         ay * ((1 - ax) * at(x0, y0 + 1) + ax * at(x0 + 1, y0 + 1));
}

}  // namespace

ImageD resample_window(const ImageD& img, double t_x, double t_y, double side, int size) {
  ImageD out(size, size, 0.0);
  const double step = side / size;
  for (int b = 0; b < size; ++b)
    for (int a = 0; a < size; ++a)
      out(a, b) = bilinear(t_x + (a + 0.5) * step, t_y + (b + 0.5) * step, img.width, img.height,
                           [&](int u, int v) { return img(u, v); });
  return out;
}

CropWindow crop_vertebra(const ImageD& img, const CameraMatrix& cam, const PixelBox& box, const Image8* mask,
                         int size) {
  if (!(box.w >= 0.0 && box.h >= 0.0)) throw Error(ErrorCode::InvalidInput, "box extents must be >= 0", "box");
  const double side = std::max(box.w, box.h);
  if (side < 8.0) throw Error(ErrorCode::TooSmall, "crop window side below 8 px", "box");
  const Point2 c = box.center();
  CropWindow out;
  out.box = box;
  out.square_side = side;
  out.crop = Crop(c.x() - 0.5 * side, c.y() - 0.5 * side, size / side);
  out.adjusted = adjust_for_crop(cam, out.crop);
  out.image = resample_window(img, out.crop.t_x, out.crop.t_y, side, size);
  if (mask) {
    ImageD m(mask->width, mask->height);
    for (std::size_t i = 0; i < mask->size(); ++i) m.data[i] = mask->data[i] ? 1.0 : 0.0;
    const ImageD r = resample_window(m, out.crop.t_x, out.crop.t_y, side, size);
    out.mask = Image8(size, size, 0);
    for (std::size_t i = 0; i < r.size(); ++i) out.mask.data[i] = r.data[i] >= 0.5 ? 1 : 0;
  }
  return out;
}

std::vector<CropWindow> localize_masks(const ImageD& img, const CameraMatrix& cam,
                                       const std::map<std::uint8_t, Image8>& masks) {
  std::vector<CropWindow> out;
  for (const auto& [id, mask] : masks) {
    const auto tight = tight_box(mask);
    if (!tight) continue;
    const bool inside = tight->u_min >= 1.0 && tight->v_min >= 1.0 && tight->u_min + tight->w <= mask.width - 1 &&
                        tight->v_min + tight->h <= mask.height - 1;
    if (!inside) continue;
    CropWindow c = crop_vertebra(img, cam, *boxes_from_mask(mask), &mask);
    c.label = id;
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<CropWindow> localize_all(const ImageD& img, const CameraMatrix& cam, const VolumeLabels& labels) {
  std::map<std::uint8_t, Image8> masks;
  for (auto id : label_ids(labels)) masks.emplace(id, render_mask(labels, id, cam, img.width, img.height));
  return localize_masks(img, cam, masks);
}

}  // namespace frk
