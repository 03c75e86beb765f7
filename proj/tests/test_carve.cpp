#include <doctest.h>

#include "support.hpp"

#include <frk/carve.hpp>
#include <frk/drr.hpp>
#include <frk/localize.hpp>
#include <frk/metrics.hpp>
#include <frk/pose.hpp>

using namespace frk;

namespace {

struct Scene {
  Phantom ph;
  VolumeLabels labels;
  std::vector<CropWindow> crops;
};

Scene render_scene(const Phantom& ph, const std::vector<Pose>& poses) {
  Scene s{ph, rasterize_phantom(ph, lattice_around(ph, 0.5, 3.0)).second, {}};
  for (const auto& p : poses) {
    const CameraMatrix cam = camera_from_pose(p);
    const Image8 m = render_mask(s.labels, 1, cam, p.detector_width_px, p.detector_height_px);
    auto c = localize_masks(to_double(m), cam, {{1, m}});
    REQUIRE(c.size() == 1);
    s.crops.push_back(std::move(c.front()));
  }
  return s;
}

std::vector<Pose> random_poses(std::mt19937_64& rng, int n) {
  std::vector<Pose> out;
  for (int i = 0; i < n; ++i) {
    Pose p;
    p.orbit_deg = test::uni(rng, -180, 180);
    p.tilt_deg = test::uni(rng, -30, 30);
    p.detector_width_px = p.detector_height_px = 256;
    out.push_back(p);
  }
  return out;
}

bool near_occupied(const VolumeLabels& g, int i, int j, int k) {
  for (int dk = -1; dk <= 1; ++dk)
    for (int dj = -1; dj <= 1; ++dj)
      for (int di = -1; di <= 1; ++di) {
        const int a = i + di, b = j + dj, c = k + dk;
        if (a < 0 || b < 0 || c < 0 || a >= g.dims().x() || b >= g.dims().y() || c >= g.dims().z()) continue;
        if (g.at(a, b, c)) return true;
      }
  return false;
}

}  // namespace

TEST_SUITE("carve") {

TEST_CASE("cube lattice is snapped to the voxel grid and covers its center") {
  const Lattice l = cube_lattice(Point3(1.3, -2.7, 10.01), 128, 0.625);
  CHECK(l.dims == Eigen::Vector3i::Constant(128));
  for (int a = 0; a < 3; ++a) {
    const double corner = l.origin_mm[a] - 0.3125;
    CHECK(std::abs(corner / 0.625 - std::round(corner / 0.625)) < 1e-9);
  }
  CHECK(l.bounds().contains(Point3(1.3, -2.7, 10.01)));
  CHECK((l.bounds().center() - Point3(1.3, -2.7, 10.01)).cwiseAbs().maxCoeff() <= 0.3125 + 1e-9);
}

TEST_CASE("visual hull contains the object up to a one-voxel band") {
  std::mt19937_64 rng(41);
  for (int t = 0; t < 3; ++t) {
    const Scene s = render_scene(test::random_phantom(rng), random_poses(rng, 4));
    CarveOptions o;
    o.dims = 64;
    o.voxel_mm = 1.0;
    const Reconstruction r = reconstruct(s.crops, o, Point3::Zero());
    const VolumeLabels gt = ground_truth_grid(s.ph, 1, r.grid.lattice());
    std::size_t missing = 0, total = 0;
    for (int k = 0; k < 64; ++k)
      for (int j = 0; j < 64; ++j)
        for (int i = 0; i < 64; ++i)
          if (gt.at(i, j, k)) {
            ++total;
            missing += !near_occupied(r.grid.volume, i, j, k);
          }
    CHECK(total > 0);
    CHECK(missing == 0);
  }
}

TEST_CASE("adding a view never adds voxels") {
  std::mt19937_64 rng(42);
  const Scene s = render_scene(test::random_phantom(rng), random_poses(rng, 5));
  CarveOptions o;
  o.dims = 48;
  o.voxel_mm = 1.0;
  std::vector<CarveView> views;
  const Lattice lat = cube_lattice(Point3::Zero(), 48, 1.0);
  VolumeLabels prev;
  for (const auto& c : s.crops) {
    views.push_back({to_double(c.mask), c.adjusted});
    if (views.size() < 2) continue;
    const OccupancyGrid g = carve(views, lat, o);
    if (prev.size())
      for (std::size_t i = 0; i < prev.size(); ++i) CHECK_FALSE((g.volume.data[i] && !prev.data[i]));
    prev = g.volume;
  }
}

TEST_CASE("sphere from eight views is reconstructed tightly") {
  const Phantom ph = sphere_phantom(Point3::Zero(), 20.0);
  std::vector<Pose> poses;
  for (int v = 0; v < 8; ++v) {
    Pose p;
    p.orbit_deg = 45.0 * v;
    p.tilt_deg = v % 2 ? 30.0 : -30.0;
    poses.push_back(p);
  }
  const Scene s = render_scene(ph, poses);
  const Reconstruction r = reconstruct(s.crops);
  CHECK(r.center.norm() < 0.5);
  const Lattice eval = expand_to_cover(r.grid.lattice(), ph.label_bounds(1));
  const Overlap o = voxel_overlap(embed(r.grid.volume, eval), ground_truth_grid(ph, 1, eval));
  CHECK(o.f1 >= 0.95);
}

TEST_CASE("mean-threshold mode keeps voxels seen bright enough") {
  const Lattice lat = cube_lattice(Point3::Zero(), 16, 1.0);
  Pose a, b;
  b.orbit_deg = 90;
  a.detector_width_px = a.detector_height_px = b.detector_width_px = b.detector_height_px = 64;
  std::vector<CarveView> views{{ImageD(64, 64, 1.0), camera_from_pose(a)}, {ImageD(64, 64, 0.1), camera_from_pose(b)}};
  CarveOptions o;
  o.mode = CarveMode::MEAN_THRESH;
  o.tau = 0.5;
  CHECK(carve(views, lat, o).occupied() == lat.voxel_count());  // mean of 1.0 and 1.0 after max-normalization
  views[1].image(0, 0) = 1.0;                                  // now view b normalizes to 0.1
  o.tau = 0.6;
  CHECK(carve(views, lat, o).occupied() == 0);
  o.tau = 0.54;
  CHECK(carve(views, lat, o).occupied() == lat.voxel_count());
}

TEST_CASE("carving needs two views") {
  try {
    carve({CarveView{ImageD(8, 8, 1.0), CameraMatrix()}}, cube_lattice(Point3::Zero(), 8, 1.0));
    FAIL("expected InsufficientViews");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InsufficientViews);
  }
}

TEST_CASE("embedding preserves voxels and rejects misaligned lattices") {
  const Lattice small = cube_lattice(Point3::Zero(), 8, 1.0);
  VolumeLabels g(small, 0);
  g.at(0, 0, 0) = g.at(7, 7, 7) = g.at(3, 4, 5) = 1;
  const Lattice big = expand_to_cover(small, Eigen::AlignedBox3d(Point3::Constant(-9.2), Point3::Constant(6.1)));
  CHECK(big.bounds().contains(Eigen::AlignedBox3d(Point3::Constant(-9.2), Point3::Constant(6.1))));
  const VolumeLabels e = embed(g, big);
  CHECK(std::count(e.data.begin(), e.data.end(), 1) == 3);
  const Point3 c = small.center_of(3, 4, 5);
  const Point3 idx = big.to_voxel(c);
  CHECK(e.at(int(std::lround(idx.x())), int(std::lround(idx.y())), int(std::lround(idx.z()))) == 1);
  Lattice shifted = big;
  shifted.origin_mm += Point3::Constant(0.3);
  try {
    embed(g, shifted);
    FAIL("expected IncompatibleGrids");
  } catch (const Error& err) {
    CHECK(err.code() == ErrorCode::IncompatibleGrids);
  }
}

TEST_CASE("carve mode names") {
  CHECK(carve_mode_from_string("hull") == CarveMode::HULL);
  CHECK(carve_mode_from_string("mean_thresh") == CarveMode::MEAN_THRESH);
  CHECK_THROWS_AS(carve_mode_from_string("nope"), Error);
}

}  // TEST_SUITE
