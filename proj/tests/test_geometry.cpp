#include <doctest.h>

#include "support.hpp"

#include <frk/pose.hpp>

using namespace frk;
using frk::test::random_camera;

TEST_SUITE("geometry") {

TEST_CASE("compose then decompose reproduces P up to positive scale") {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 200; ++t) {
    const CameraMatrix p = random_camera(rng);
    const double s = test::uni(rng, 0.01, 100.0);
    const CameraMatrix scaled(Mat34<double>(p.matrix() * s));
    const Decomposition d = decompose_camera(scaled);
    const CameraMatrix back = compose_camera(d.k, d.r, d.x_o);
    const double lambda = test::best_scale(scaled.matrix(), back.matrix());
    CHECK(lambda > 0.0);
    CHECK((scaled.matrix() - lambda * back.matrix()).norm() <= 1e-9 * scaled.matrix().norm());
  }
}

TEST_CASE("decomposition is invariant to scaling P") {
  std::mt19937_64 rng(12);
  for (int t = 0; t < 200; ++t) {
    const CameraMatrix p = random_camera(rng);
    const Decomposition a = decompose_camera(p);
    const Decomposition b = decompose_camera(CameraMatrix(Mat34<double>(7.3 * p.matrix())));
    CHECK((a.k - b.k).norm() <= 1e-9 * a.k.norm());
    CHECK((a.r - b.r).norm() <= 1e-9);
    CHECK((a.x_o - b.x_o).norm() <= 1e-9 * (1.0 + a.x_o.norm()));
  }
}

TEST_CASE("decomposition yields a proper rotation and positive focal lengths") {
  std::mt19937_64 rng(13);
  for (int t = 0; t < 100; ++t) {
    const double s = t % 2 ? -2.5 : 0.4;  // negative overall scale must not flip R
    const Decomposition d = decompose_camera(CameraMatrix(Mat34<double>(s * random_camera(rng).matrix())));
    CHECK(d.r.determinant() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK((d.r * d.r.transpose() - Eigen::Matrix3d::Identity()).norm() < 1e-12);
    CHECK(d.k(0, 0) > 0);
    CHECK(d.k(1, 1) > 0);
    CHECK(d.k(2, 2) == 1.0);
  }
}

TEST_CASE("decomposition recovers the generating parameters") {
  Pose pose;
  pose.orbit_deg = 37;
  pose.tilt_deg = -12;
  pose.center_mm = Point3(3, -4, 20);
  const Decomposition d = decompose_camera(camera_from_pose(pose));
  CHECK((d.x_o - pose.source_position()).norm() < 1e-9);
  CHECK((d.r - pose_rotation(pose)).norm() < 1e-12);
  CHECK((d.k - pose_intrinsics(pose)).norm() < 1e-9);
}

TEST_CASE("crop adjustment commutes with projection") {
  std::mt19937_64 rng(14);
  for (int t = 0; t < 500; ++t) {
    const CameraMatrix p = random_camera(rng);
    const Crop crop(test::uni(rng, -50, 300), test::uni(rng, -50, 300), test::uni(rng, 0.2, 5.0));
    const Point3 x(test::uni(rng, -80, 80), test::uni(rng, -80, 80), test::uni(rng, -80, 80));
    const Point2 direct = project(adjust_for_crop(p, crop), x);
    const Point2 shifted = crop.apply(project(p, x));
    CHECK((direct - shifted).norm() <= 1e-9);
  }
}

TEST_CASE("crop transform rejects invalid scale") {
  CHECK_THROWS_AS(Crop(0, 0, 0.0), Error);
  CHECK_THROWS_AS(Crop(0, 0, -1.0), Error);
  CHECK_THROWS_AS(Crop(std::nan(""), 0, 1.0), Error);
}

TEST_CASE("singular cameras are rejected") {
  Mat34<double> m = Mat34<double>::Zero();
  m(0, 0) = 1;
  m(1, 1) = 1;
  try {
    CameraMatrix c(m);
    FAIL("expected DegenerateCamera");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DegenerateCamera);
  }
}

TEST_CASE("projection of a point on the principal plane throws") {
  Pose pose;
  const CameraMatrix cam = camera_from_pose(pose);
  const Decomposition d = decompose_camera(cam);
  const Point3 on_plane = d.x_o + 100.0 * d.r.row(0).transpose();
  try {
    project(cam, on_plane);
    FAIL("expected PointAtInfinity");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::PointAtInfinity);
  }
}

TEST_CASE("triangulation is exact on consistent rays") {
  std::mt19937_64 rng(15);
  for (int t = 0; t < 200; ++t) {
    const Point3 x(test::uni(rng, -30, 30), test::uni(rng, -30, 30), test::uni(rng, -30, 30));
    std::vector<CameraMatrix> cams;
    std::vector<Point2> centers;
    const int n = 2 + t % 4;
    for (int v = 0; v < n; ++v) {
      cams.push_back(random_camera(rng));
      centers.push_back(project(cams.back(), x));
    }
    CHECK((triangulate_origin(cams, centers) - x).norm() <= 1e-6);
  }
}

TEST_CASE("triangulation matches a brute-force lattice search under noise") {
  // oracle: minimize the summed squared reprojection error over a 1 mm lattice
  std::mt19937_64 rng(16);
  for (int t = 0; t < 20; ++t) {
    const Point3 x(test::uni(rng, -10, 10), test::uni(rng, -10, 10), test::uni(rng, -10, 10));
    std::vector<CameraMatrix> cams;
    std::vector<Point2> centers;
    for (int v = 0; v < 4; ++v) {
      cams.push_back(random_camera(rng));
      centers.push_back(project(cams.back(), x) + Point2(test::uni(rng, -0.5, 0.5), test::uni(rng, -0.5, 0.5)));
    }
    const Point3 est = triangulate_origin(cams, centers);
    Point3 best = Point3::Zero();
    double best_cost = std::numeric_limits<double>::infinity();
    for (int i = -6; i <= 6; ++i)
      for (int j = -6; j <= 6; ++j)
        for (int k = -6; k <= 6; ++k) {
          const Point3 c = x.array().round().matrix() + Point3(i, j, k);
          double cost = 0;
          for (std::size_t v = 0; v < cams.size(); ++v) cost += (project(cams[v], c) - centers[v]).squaredNorm();
          if (cost < best_cost) {
            best_cost = cost;
            best = c;
          }
        }
    CHECK((est - best).cwiseAbs().maxCoeff() <= 1.0);
  }
}

TEST_CASE("triangulation rejects too few or coincident views") {
  std::mt19937_64 rng(17);
  const CameraMatrix c = random_camera(rng);
  const Point2 u = project(c, Point3(Point3::Zero()));
  try {
    triangulate_origin(std::vector<CameraMatrix>{c}, std::vector<Point2>{u});
    FAIL("expected InsufficientViews");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InsufficientViews);
  }
  try {
    triangulate_origin(std::vector<CameraMatrix>{c, c}, std::vector<Point2>{u, u});
    FAIL("expected DegenerateGeometry");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DegenerateGeometry);
  }
}

}  // TEST_SUITE
