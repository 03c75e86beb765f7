#pragma once

// Shared fixtures for unit and acceptance tests.

#include <frk/geometry.hpp>
#include <frk/volume.hpp>

#include <random>

namespace frk::test {

inline Eigen::Matrix3d random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
  q.normalize();
  return q.toRotationMatrix();
}

inline double uni(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline Eigen::Matrix3d random_intrinsics(std::mt19937_64& rng) {
  Eigen::Matrix3d k;
  k << uni(rng, 500, 3000), uni(rng, -5, 5), uni(rng, 100, 400),
       0, uni(rng, 500, 3000), uni(rng, 100, 400),
       0, 0, 1;
  return k;
}

/// Camera looking at the origin from `dist_mm`, with random intrinsics.
inline CameraMatrix random_camera(std::mt19937_64& rng, double dist_mm = 500.0) {
  const Eigen::Matrix3d r = random_rotation(rng);
  const Point3 axis = r.row(2).transpose();
  return compose_camera<double>(random_intrinsics(rng), r, -dist_mm * axis);
}

/// Best scale factor s minimizing ||a - s b||.
inline double best_scale(const Mat34<double>& a, const Mat34<double>& b) {
  return (a.array() * b.array()).sum() / b.squaredNorm();
}

inline Lattice cube(int n, double spacing, const Point3& center = Point3::Zero()) {
  Lattice l;
  l.dims = Eigen::Vector3i::Constant(n);
  l.spacing_mm = Eigen::Vector3d::Constant(spacing);
  l.origin_mm = center - Point3::Constant(0.5 * (n - 1) * spacing);
  return l;
}

}  // namespace frk::test

#include <frk/phantom.hpp>

namespace frk::test {

/// One to three random primitives (label 1) near the origin.
inline Phantom random_phantom(std::mt19937_64& rng) {
  Phantom ph;
  const int n = 1 + static_cast<int>(rng() % 3);
  for (int i = 0; i < n; ++i) {
    const Point3 c(uni(rng, -8, 8), uni(rng, -8, 8), uni(rng, -8, 8));
    Primitive p;
    p.hu = 700;
    p.label = 1;
    switch (rng() % 3) {
      case 0: p.shape = Sphere{c, uni(rng, 6, 16)}; break;
      case 1: p.shape = Box{c, Point3(uni(rng, 4, 14), uni(rng, 4, 14), uni(rng, 4, 14)), random_rotation(rng)}; break;
      default: {
        const Point3 axis = random_rotation(rng).col(0) * uni(rng, 5, 15);
        p.shape = Cylinder{c - axis, c + axis, uni(rng, 3, 8)};
      }
    }
    ph.primitives.push_back(p);
  }
  return ph;
}

}  // namespace frk::test
