#include <doctest.h>

#include "support.hpp"

#include <frk/drr.hpp>
#include <frk/phantom.hpp>
#include <frk/pose.hpp>

using namespace frk;

namespace {

/// 40^3 lattice of 1 mm voxels centered on the origin with a unit-attenuation
/// block of voxels [lo, hi) on every axis.
VolumeF block_volume(int lo, int hi, float value = 1.0f) {
  VolumeF v(test::cube(40, 1.0), 0.0f);
  for (int k = lo; k < hi; ++k)
    for (int j = lo; j < hi; ++j)
      for (int i = lo; i < hi; ++i) v.at(i, j, k) = value;
  return v;
}

double rms(const ImageD& img) {
  double s = 0;
  for (double x : img.data) s += x * x;
  return std::sqrt(s / static_cast<double>(img.size()));
}

}  // namespace

TEST_SUITE("drr") {

TEST_CASE("path length through a box is within one integration step") {
  const VolumeF v = block_volume(10, 30);  // 20 mm of material along every axis
  for (double step : {0.5, 0.25, 0.1}) {
    for (double orbit : {0.0, 90.0}) {
      Pose p;
      p.orbit_deg = orbit;
      const DrrImage d = render_drr(v, camera_from_pose(p), p.detector_width_px, p.detector_height_px, step);
      CHECK(std::abs(d.raw(223, 223) - 20.0) <= step);
    }
  }
}

TEST_CASE("rays that miss the volume integrate to zero") {
  const VolumeF v = block_volume(10, 30);
  Pose p;
  const DrrImage d = render_drr(v, camera_from_pose(p), 448, 448, 0.5);
  CHECK(d.raw(0, 0) == 0.0);
  CHECK(d.raw(447, 447) == 0.0);
}

TEST_CASE("rendering is linear in attenuation") {
  const VolumeF a = block_volume(5, 25), b = block_volume(15, 35);
  VolumeF mix(a.lattice, 0.0f);
  for (std::size_t i = 0; i < mix.size(); ++i) mix.data[i] = 2.0f * a.data[i] + 3.0f * b.data[i];
  Pose p;
  p.orbit_deg = 33;
  p.tilt_deg = 12;
  p.detector_width_px = p.detector_height_px = 128;
  p.pixel_pitch_mm = 2.0;
  const CameraMatrix cam = camera_from_pose(p);
  const DrrImage ra = render_drr(a, cam, 128, 128, 0.5), rb = render_drr(b, cam, 128, 128, 0.5);
  const DrrImage rm = render_drr(mix, cam, 128, 128, 0.5);
  double max_rel = 0;
  for (std::size_t i = 0; i < rm.raw.size(); ++i) {
    const double expect = 2.0 * ra.raw.data[i] + 3.0 * rb.raw.data[i];
    max_rel = std::max(max_rel, std::abs(rm.raw.data[i] - expect) / std::max(1.0, expect));
  }
  CHECK(max_rel < 1e-12);
}

TEST_CASE("moving phantom and camera together leaves the image unchanged") {
  const Phantom ph = l_shape_phantom(Point3(-25.2, -5.3, -20.4));
  Isometry3<double> motion = Isometry3<double>::Identity();
  motion.rotate(Eigen::AngleAxisd(0.4, Point3(1, 2, 3).normalized()));
  motion.pretranslate(Point3(7, -4, 11));
  const Phantom moved = ph.transformed(motion);

  Pose p;
  p.orbit_deg = 25;
  p.tilt_deg = -10;
  p.detector_width_px = p.detector_height_px = 256;
  const CameraMatrix cam = camera_from_pose(p);
  auto render = [](const Phantom& x, const CameraMatrix& c) {
    auto [hu, labels] = rasterize_phantom(x, lattice_around(x, 0.25, 4.0));
    return render_drr(threshold_bone(hu), c, 256, 256, 0.125).raw;
  };
  const ImageD a = render(ph, cam);
  const ImageD b = render(moved, cam.transformed(motion));
  ImageD diff = a;
  for (std::size_t i = 0; i < diff.size(); ++i) diff.data[i] -= b.data[i];
  CHECK(rms(a) > 0.0);
  CHECK(rms(diff) <= 0.01 * rms(a));
}

TEST_CASE("silhouette covers the projected sphere") {
  const Phantom ph = sphere_phantom(Point3::Zero(), 15.0);
  auto [hu, labels] = rasterize_phantom(ph, lattice_around(ph, 0.5, 3.0));
  Pose p;
  const Image8 m = render_mask(labels, 1, camera_from_pose(p), 448, 448);
  double area = 0;
  for (auto x : m.data) area += x;
  // exact silhouette of a sphere at distance d: disc of angular radius asin(r/d)
  const double f_px = p.focal_len_mm / p.pixel_pitch_mm;
  const double r_px = f_px * std::tan(std::asin(15.0 / 500.0));
  const double expect = 3.14159265358979 * r_px * r_px;
  CHECK(std::abs(area - expect) / expect < 0.03);
  CHECK(m(224, 224) == 1);
  CHECK(m(0, 0) == 0);
}

TEST_CASE("invalid render configurations") {
  const VolumeF v = block_volume(10, 30);
  Pose p;
  try {
    render_drr(v, camera_from_pose(p), 64, 64, 0.0);
    FAIL("expected InvalidInput");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidInput);
    CHECK(e.field() == "step_mm");
  }
  p.source_to_center_mm = 5.0;  // source inside the volume
  try {
    render_drr(v, camera_from_pose(p), 64, 64, 0.5);
    FAIL("expected UnsupportedConfiguration");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::UnsupportedConfiguration);
  }
}

TEST_CASE("normalized DRR maps the maximum to 65535") {
  DrrImage d{2, 1, 0.66, ImageD(2, 1, 0.0)};
  d.raw(0, 0) = 3.0;
  d.raw(1, 0) = 1.5;
  const Image16 n = d.normalized();
  CHECK(n(0, 0) == 65535);
  CHECK(n(1, 0) == 32768);
  DrrImage empty{2, 1, 0.66, ImageD(2, 1, 0.0)};
  CHECK(empty.normalized()(0, 0) == 0);
}

TEST_CASE("bead line integral through the center equals diameter times attenuation") {
  Pose p;
  p.pixel_pitch_mm = 0.05;  // fine pixels so supersampling barely blurs the peak
  const CameraMatrix cam = camera_from_pose(p);
  DrrImage d{448, 448, p.pixel_pitch_mm, ImageD(448, 448, 0.0)};
  add_beads(d, cam, {Bead{Point3::Zero(), 5.0, true}}, 2.0);
  const double peak = *std::max_element(d.raw.data.begin(), d.raw.data.end());
  CHECK(peak == doctest::Approx(10.0).epsilon(0.01));
}

}  // TEST_SUITE
