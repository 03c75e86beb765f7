#include <doctest.h>

#include "support.hpp"

#include <frk/drr.hpp>
#include <frk/localize.hpp>
#include <frk/phantom.hpp>
#include <frk/pose.hpp>

using namespace frk;

TEST_SUITE("localize") {

TEST_CASE("tight box and margin box of a rectangle") {
  Image8 m(100, 80, 0);
  for (int v = 20; v < 40; ++v)
    for (int u = 10; u < 50; ++u) m(u, v) = 1;
  const PixelBox t = *tight_box(m);
  CHECK(t == PixelBox{10, 20, 40, 20});
  const PixelBox b = *boxes_from_mask(m);
  CHECK(b.u_min == doctest::Approx(8.0));
  CHECK(b.v_min == doctest::Approx(18.0));
  CHECK(b.w == doctest::Approx(44.0));
  CHECK(b.h == doctest::Approx(24.0));
  CHECK_FALSE(tight_box(Image8(4, 4, 0)).has_value());
}

TEST_CASE("margin is clamped at the image border") {
  Image8 m(50, 50, 0);
  for (int v = 0; v < 10; ++v)
    for (int u = 0; u < 40; ++u) m(u, v) = 1;
  const PixelBox b = *boxes_from_mask(m);
  CHECK(b.u_min == 0.0);
  CHECK(b.v_min == 0.0);
  CHECK(b.u_min + b.w == doctest::Approx(42.0));
}

TEST_CASE("crop window is the square of side max(w, h) around the box center") {
  const ImageD img(448, 448, 1.0);
  Pose p;
  const CameraMatrix cam = camera_from_pose(p);
  const CropWindow c = crop_vertebra(img, cam, PixelBox{100, 120, 40, 60});
  CHECK(c.square_side == 60.0);
  CHECK(c.crop.t_x == doctest::Approx(90.0));
  CHECK(c.crop.t_y == doctest::Approx(120.0));
  CHECK(c.crop.scale == doctest::Approx(224.0 / 60.0));
  CHECK(c.image.width == kCropSize);
  CHECK(c.image(100, 100) == doctest::Approx(1.0));
}

TEST_CASE("adjusted camera maps world points to the crop pixel of the resampled image") {
  Pose p;
  const CameraMatrix cam = camera_from_pose(p);
  const Point3 x(4, -3, 7);
  const Point2 uv = project(cam, x);
  const CropWindow c = crop_vertebra(ImageD(448, 448, 0.0), cam, PixelBox{uv.x() - 30, uv.y() - 20, 50, 50});
  const Point2 in_crop = project(c.adjusted, x);
  CHECK((in_crop - c.crop.apply(uv)).norm() < 1e-9);
  // crop pixel a samples source x = t + (a + 0.5) side / size
  CHECK(c.crop.t_x + (in_crop.x()) / c.crop.scale == doctest::Approx(uv.x()));
}

TEST_CASE("resampling a linear ramp is exact inside the image") {
  ImageD img(64, 64);
  for (int v = 0; v < 64; ++v)
    for (int u = 0; u < 64; ++u) img(u, v) = 3.0 * (u + 0.5) - (v + 0.5);
  const ImageD r = resample_window(img, 10.0, 12.0, 32.0, 16);
  for (int b = 0; b < 16; ++b)
    for (int a = 0; a < 16; ++a) {
      const double x = 10.0 + (a + 0.5) * 2.0, y = 12.0 + (b + 0.5) * 2.0;
      CHECK(r(a, b) == doctest::Approx(3.0 * x - y).epsilon(1e-12));
    }
  const ImageD outside = resample_window(img, 200.0, 200.0, 32.0, 4);
  CHECK(outside(0, 0) == 0.0);
}

TEST_CASE("tiny windows are rejected") {
  try {
    crop_vertebra(ImageD(64, 64, 0.0), CameraMatrix(), PixelBox{10, 10, 5, 7});
    FAIL("expected TooSmall");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::TooSmall);
  }
}

TEST_CASE("only fully visible vertebrae are localized") {
  const Phantom ph = lumbar_phantom(5, false);
  auto [hu, labels] = rasterize_phantom(ph, lattice_around(ph, 1.0, 5.0));
  Pose p;
  p.center_mm = lumbar_level_center(3);
  p.detector_width_px = p.detector_height_px = 256;  // too small for the whole column
  const CameraMatrix cam = camera_from_pose(p);
  const auto crops = localize_all(ImageD(256, 256, 0.0), cam, labels);
  REQUIRE(!crops.empty());
  bool has3 = false;
  for (const auto& c : crops) {
    has3 = has3 || c.label == 3;
    CHECK(c.label != 1);
    CHECK(c.label != 5);
    CHECK(c.mask.width == kCropSize);
  }
  CHECK(has3);
}

}  // TEST_SUITE
