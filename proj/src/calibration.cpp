#include <frk/calibration.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

namespace frk {

std::vector<int> FiducialSet::indices_of(BeadClass c) const {
  std::vector<int> out;
  for (std::size_t i = 0; i < classes.size(); ++i)
    if (classes[i] == c) out.push_back(static_cast<int>(i));
  return out;
}

void FiducialSet::validate() const {
  if (points3d.size() != classes.size())
    throw Error(ErrorCode::InvalidInput, "points3d and class lists differ in length", "class");
  for (const auto& p : points3d)
    if (!p.allFinite()) throw Error(ErrorCode::InvalidInput, "non-finite fiducial coordinate", "points3d_mm");
}

namespace {

// ---------------------------------------------------------------- detection

struct Peak {
  int u, v;
  double score, radius;
};

double ring_median(const ImageD& img, const Point2& c, double r_in, double r_out) {
  std::vector<double> vals;
  const int u0 = std::max(0, static_cast<int>(std::floor(c.x() - r_out)));
  const int u1 = std::min(img.width - 1, static_cast<int>(std::ceil(c.x() + r_out)));
  const int v0 = std::max(0, static_cast<int>(std::floor(c.y() - r_out)));
  const int v1 = std::min(img.height - 1, static_cast<int>(std::ceil(c.y() + r_out)));
  for (int v = v0; v <= v1; ++v)
    for (int u = u0; u <= u1; ++u) {
      const double d = (Point2(u + 0.5, v + 0.5) - c).norm();
      if (d >= r_in && d <= r_out) vals.push_back(img(u, v));
    }
  if (vals.empty()) return 0.0;
  auto mid = vals.begin() + static_cast<std::ptrdiff_t>(vals.size() / 2);
  std::nth_element(vals.begin(), mid, vals.end());
  return *mid;
}

/// Background-subtracted intensity centroid over a disc, iterated so the disc
/// follows the estimate.
Point2 refine_center(const ImageD& img, Point2 c, double radius) {
  const double disc = radius + 1.5;
  for (int iter = 0; iter < 3; ++iter) {
    const double bg = ring_median(img, c, disc + 0.5, disc + 3.0);
    double sw = 0.0;
    Point2 acc = Point2::Zero();
    const int u0 = std::max(0, static_cast<int>(std::floor(c.x() - disc)));
    const int u1 = std::min(img.width - 1, static_cast<int>(std::ceil(c.x() + disc)));
    const int v0 = std::max(0, static_cast<int>(std::floor(c.y() - disc)));
    const int v1 = std::min(img.height - 1, static_cast<int>(std::ceil(c.y() + disc)));
    for (int v = v0; v <= v1; ++v)
      for (int u = u0; u <= u1; ++u) {
        const Point2 p(u + 0.5, v + 0.5);
        if ((p - c).norm() > disc) continue;
        const double w = std::max(img(u, v) - bg, 0.0);
        sw += w;
        acc += w * p;
      }
    if (!(sw > 0.0)) break;
    c = acc / sw;
  }
  return c;
}

std::vector<std::pair<int, int>> circle_offsets(double r) {
  const int n = std::max(8, static_cast<int>(std::ceil(4.0 * std::numbers::pi * r)));
  std::vector<std::pair<int, int>> out;
  for (int i = 0; i < n; ++i) {
    const double a = 2.0 * std::numbers::pi * i / n;
    out.emplace_back(static_cast<int>(std::lround(r * std::cos(a))), static_cast<int>(std::lround(r * std::sin(a))));
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

// ---------------------------------------------------------------- DLT

Eigen::Matrix3d similarity_2d(std::span<const Point2> pts) {
  Point2 c = Point2::Zero();
  for (const auto& p : pts) c += p;
  c /= static_cast<double>(pts.size());
  double ms = 0.0;
  for (const auto& p : pts) ms += (p - c).squaredNorm();
  const double rms = std::sqrt(ms / static_cast<double>(pts.size()));
  const double s = rms > 0.0 ? std::sqrt(2.0) / rms : 1.0;
  Eigen::Matrix3d t;
  t << s, 0, -s * c.x(), 0, s, -s * c.y(), 0, 0, 1;
  return t;
}

Eigen::Matrix4d similarity_3d(std::span<const Point3> pts) {
  Point3 c = Point3::Zero();
  for (const auto& p : pts) c += p;
  c /= static_cast<double>(pts.size());
  double ms = 0.0;
  for (const auto& p : pts) ms += (p - c).squaredNorm();
  const double rms = std::sqrt(ms / static_cast<double>(pts.size()));
  const double s = rms > 0.0 ? std::sqrt(3.0) / rms : 1.0;
  Eigen::Matrix4d t = Eigen::Matrix4d::Identity();
  t.topLeftCorner<3, 3>() *= s;
  t.topRightCorner<3, 1>() = -s * c;
  return t;
}

bool coplanar(std::span<const Point3> pts) {
  Point3 c = Point3::Zero();
  for (const auto& p : pts) c += p;
  c /= static_cast<double>(pts.size());
  Eigen::Matrix3d scatter = Eigen::Matrix3d::Zero();
  for (const auto& p : pts) scatter += (p - c) * (p - c).transpose();
  // singular values of the centered point matrix are the square roots of these
  const Eigen::Vector3d ev = Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d>(scatter).eigenvalues().cwiseMax(0.0);
  const double s_max = std::sqrt(ev(2)), s_min = std::sqrt(ev(0));
  return !(s_min > 1e-9 * s_max);
}

Mat34<double> reshape_p(const Eigen::Matrix<double, 12, 1>& h) {
  Mat34<double> p;
  p << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8), h(9), h(10), h(11);
  return p;
}

/// Null vector of A from the normal equations. Used only to rank candidate
/// assignments; the winner is re-solved with the SVD path.
Mat34<double> dlt_fast(const std::vector<Eigen::Vector3d>& x, const std::vector<Eigen::Vector4d>& X) {
  Eigen::Matrix<double, 12, 12> ata = Eigen::Matrix<double, 12, 12>::Zero();
  Eigen::Matrix<double, 12, 1> r0, r1;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const Eigen::Vector4d& Xi = X[i];
    r0 << Xi, Eigen::Vector4d::Zero(), -x[i].x() * Xi;
    r1 << Eigen::Vector4d::Zero(), Xi, -x[i].y() * Xi;
    ata.selfadjointView<Eigen::Lower>().rankUpdate(r0);
    ata.selfadjointView<Eigen::Lower>().rankUpdate(r1);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 12, 12>> es(ata);
  return reshape_p(es.eigenvectors().col(0));
}

/// DLT on points already in normalized coordinates, given as homogeneous rows.
Mat34<double> dlt_core(const std::vector<Eigen::Vector3d>& x, const std::vector<Eigen::Vector4d>& X) {
  const auto n = static_cast<Eigen::Index>(x.size());
  Eigen::Matrix<double, Eigen::Dynamic, 12> a = Eigen::Matrix<double, Eigen::Dynamic, 12>::Zero(2 * n, 12);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& xi = x[static_cast<std::size_t>(i)];
    const Eigen::RowVector4d Xi = X[static_cast<std::size_t>(i)].transpose();
    a.block<1, 4>(2 * i, 0) = Xi;
    a.block<1, 4>(2 * i, 8) = -xi.x() * Xi;
    a.block<1, 4>(2 * i + 1, 4) = Xi;
    a.block<1, 4>(2 * i + 1, 8) = -xi.y() * Xi;
  }
  Eigen::JacobiSVD<Eigen::Matrix<double, Eigen::Dynamic, 12>> svd(a, Eigen::ComputeFullV);
  return reshape_p(svd.matrixV().col(11));
}

struct NormalizedSets {
  Eigen::Matrix3d t2;
  Eigen::Matrix4d t3;
  std::vector<Eigen::Vector3d> x;
  std::vector<Eigen::Vector4d> X;
};

NormalizedSets normalize_sets(std::span<const Point2> p2, std::span<const Point3> p3) {
  NormalizedSets s{similarity_2d(p2), similarity_3d(p3), {}, {}};
  for (const auto& p : p2) s.x.push_back(s.t2 * p.homogeneous());
  for (const auto& p : p3) s.X.push_back(s.t3 * p.homogeneous());
  return s;
}

CameraMatrix denormalize(const Mat34<double>& pn, const Eigen::Matrix3d& t2, const Eigen::Matrix4d& t3) {
  return CameraMatrix(Mat34<double>(t2.inverse() * pn * t3)).normalize();
}

/// Mean reprojection error; infinite when a point falls behind the camera or
/// the camera is singular.
double mean_error(const CameraMatrix& cam, std::span<const Point2> p2, std::span<const Point3> p3,
                  const std::vector<int>& assignment) {
  const CameraMatrix n = cam.normalize();
  double sum = 0.0;
  for (std::size_t j = 0; j < p2.size(); ++j) {
    const Point3 h = n.left() * p3[static_cast<std::size_t>(assignment[j])] + n.last_column();
    if (!(h.z() > 0.0)) return std::numeric_limits<double>::infinity();
    sum += (h.head<2>() / h.z() - p2[j]).norm();
  }
  return sum / static_cast<double>(p2.size());
}

struct SearchBest {
  std::vector<int> assignment;
  double error = std::numeric_limits<double>::infinity();
  Mat34<double> p = Mat34<double>::Zero();
};

void search(std::span<const Point3> ref3d, std::span<const Point2> ref2d, const NormalizedSets& ns,
            std::vector<int>& current, std::vector<char>& used, SearchBest& best) {
  const std::size_t depth = current.size();
  if (depth == ref2d.size()) {
    std::vector<Eigen::Vector4d> X;
    std::vector<Point3> subset;
    X.reserve(depth);
    for (int i : current) {
      X.push_back(ns.X[static_cast<std::size_t>(i)]);
      subset.push_back(ref3d[static_cast<std::size_t>(i)]);
    }
    if (ref2d.size() < ref3d.size() && coplanar(subset)) return;
    try {
      const Mat34<double> pn = dlt_fast(ns.x, X);
      const CameraMatrix cam = denormalize(pn, ns.t2, ns.t3);
      const double err = mean_error(cam, ref2d, ref3d, current);
      if (err < best.error) best = {current, err, cam.matrix()};
    } catch (const Error&) {
      // singular candidate camera; not a solution
    }
    return;
  }
  for (std::size_t i = 0; i < ref3d.size(); ++i) {
    if (used[i]) continue;
    used[i] = 1;
    current.push_back(static_cast<int>(i));
    search(ref3d, ref2d, ns, current, used, best);
    current.pop_back();
    used[i] = 0;
  }
}

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// ---------------------------------------------------------------- inpainting

std::vector<char> disc_mask(int w, int h, const std::vector<Detection>& dets, double radius_scale) {
  std::vector<char> mask(static_cast<std::size_t>(w) * h, 0);
  for (const auto& d : dets) {
    const double r = radius_scale * d.radius_px;
    const int u0 = std::max(0, static_cast<int>(std::floor(d.center.x() - r)));
    const int u1 = std::min(w - 1, static_cast<int>(std::ceil(d.center.x() + r)));
    const int v0 = std::max(0, static_cast<int>(std::floor(d.center.y() - r)));
    const int v1 = std::min(h - 1, static_cast<int>(std::ceil(d.center.y() + r)));
    for (int v = v0; v <= v1; ++v)
      for (int u = u0; u <= u1; ++u)
        if ((Point2(u + 0.5, v + 0.5) - d.center).norm() <= r) mask[static_cast<std::size_t>(v) * w + u] = 1;
  }
  return mask;
}

/// Running mean; exact when all inputs are equal.
struct RunningMean {
  double m = 0.0;
  int n = 0;
  void add(double x) {
    ++n;
    m += (x - m) / n;
  }
};

void fill_masked(ImageD& img, const std::vector<char>& mask) {
  const int w = img.width, h = img.height;
  std::vector<char> known(mask.size());
  std::vector<int> unknown;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    known[i] = !mask[i];
    if (mask[i]) unknown.push_back(static_cast<int>(i));
  }
  if (unknown.empty()) return;
  if (unknown.size() == mask.size()) {
    std::fill(img.data.begin(), img.data.end(), 0.0);
    return;
  }

  // Inward march: each layer takes the mean of its already known neighbours.
  while (!unknown.empty()) {
    std::vector<std::pair<int, double>> layer;
    std::vector<int> rest;
    for (int idx : unknown) {
      const int u = idx % w, v = idx / w;
      RunningMean mean;
      for (int dv = -1; dv <= 1; ++dv)
        for (int du = -1; du <= 1; ++du) {
          if (!du && !dv) continue;
          const int uu = u + du, vv = v + dv;
          if (uu < 0 || vv < 0 || uu >= w || vv >= h) continue;
          const std::size_t n = static_cast<std::size_t>(vv) * w + uu;
          if (known[n]) mean.add(img.data[n]);
        }
      if (mean.n) layer.emplace_back(idx, mean.m);
      else rest.push_back(idx);
    }
    for (auto [idx, val] : layer) {
      img.data[static_cast<std::size_t>(idx)] = val;
      known[static_cast<std::size_t>(idx)] = 1;
    }
    unknown.swap(rest);
  }

  // Relax towards the discrete harmonic fill.
  std::vector<int> masked;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) masked.push_back(static_cast<int>(i));
  for (int sweep = 0; sweep < 500; ++sweep) {
    double change = 0.0, scale = 0.0;
    for (int idx : masked) {
      const int u = idx % w, v = idx / w;
      RunningMean mean;
      for (int dv = -1; dv <= 1; ++dv)
        for (int du = -1; du <= 1; ++du) {
          if (!du && !dv) continue;
          const int uu = u + du, vv = v + dv;
          if (uu < 0 || vv < 0 || uu >= w || vv >= h) continue;
          mean.add(img.data[static_cast<std::size_t>(vv) * w + uu]);
        }
      double& cur = img.data[static_cast<std::size_t>(idx)];
      change = std::max(change, std::abs(mean.m - cur));
      scale = std::max(scale, std::abs(mean.m));
      cur = mean.m;
    }
    if (change <= 1e-9 * std::max(scale, 1.0)) break;
  }
}

}  // namespace

std::vector<Detection> detect_fiducials(const ImageD& img, const DetectOptions& opts) {
  if (!(opts.r_min_px > 0.0) || !(opts.r_max_px >= opts.r_min_px))
    throw Error(ErrorCode::InvalidInput, "radius range must satisfy 0 < r_min <= r_max", "radii_px");
  const int w = img.width, h = img.height;
  std::vector<Detection> out;
  if (w == 0 || h == 0) return out;

  const auto [mn_it, mx_it] = std::minmax_element(img.data.begin(), img.data.end());
  const double mn = *mn_it, mx = *mx_it;
  if (!(mx > mn)) return out;
  ImageD work(w, h);
  for (std::size_t i = 0; i < img.size(); ++i) {
    const double t = (img.data[i] - mn) / (mx - mn);
    work.data[i] = opts.dark_beads ? 1.0 - t : t;
  }

  std::vector<char> fg(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) fg[i] = work.data[i] >= opts.threshold;
  auto is_fg = [&](int u, int v) { return u >= 0 && v >= 0 && u < w && v < h && fg[static_cast<std::size_t>(v) * w + u]; };
  std::vector<std::pair<int, int>> edges;
  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u)
      if (is_fg(u, v) && (!is_fg(u - 1, v) || !is_fg(u + 1, v) || !is_fg(u, v - 1) || !is_fg(u, v + 1)))
        edges.emplace_back(u, v);
  if (edges.empty()) return out;

  // Hough accumulation; the inner boundary of a disc of radius R sits near R - 0.5.
  std::vector<double> best(img.size(), 0.0), best_r(img.size(), 0.0);
  std::vector<int> acc(img.size());
  for (double r = opts.r_min_px; r <= opts.r_max_px + 1e-9; r += 0.5) {
    const double r_edge = std::max(r - 0.5, 0.5);
    const auto offsets = circle_offsets(r_edge);
    std::fill(acc.begin(), acc.end(), 0);
    for (auto [eu, ev] : edges)
      for (auto [du, dv] : offsets) {
        const int cu = eu - du, cv = ev - dv;
        if (cu >= 0 && cv >= 0 && cu < w && cv < h) ++acc[static_cast<std::size_t>(cv) * w + cu];
      }
    const double norm = static_cast<double>(offsets.size());
    for (std::size_t i = 0; i < acc.size(); ++i) {
      const double s = acc[i] / norm;
      if (s > best[i]) {
        best[i] = s;
        best_r[i] = r;
      }
    }
  }

  std::vector<Peak> peaks;
  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u) {
      const double s = best[static_cast<std::size_t>(v) * w + u];
      if (s < opts.min_support || !is_fg(u, v)) continue;
      bool is_max = true;
      for (int dv = -2; dv <= 2 && is_max; ++dv)
        for (int du = -2; du <= 2; ++du) {
          const int uu = u + du, vv = v + dv;
          if ((!du && !dv) || uu < 0 || vv < 0 || uu >= w || vv >= h) continue;
          const double o = best[static_cast<std::size_t>(vv) * w + uu];
          // ties resolved towards the first pixel in scan order
          if (o > s || (o == s && (dv < 0 || (dv == 0 && du < 0)))) {
            is_max = false;
            break;
          }
        }
      if (is_max) peaks.push_back({u, v, s, best_r[static_cast<std::size_t>(v) * w + u]});
    }
  std::stable_sort(peaks.begin(), peaks.end(), [](const Peak& a, const Peak& b) { return a.score > b.score; });

  for (const auto& p : peaks) {
    Detection d;
    d.radius_px = p.radius;
    d.score = p.score;
    d.center = refine_center(work, Point2(p.u + 0.5, p.v + 0.5), p.radius);
    bool duplicate = false;
    for (const auto& o : out) duplicate = duplicate || (o.center - d.center).norm() <= 2.0;
    if (duplicate) continue;
    d.bead_class = d.radius_px >= opts.reference_split_px ? BeadClass::REFERENCE : BeadClass::STANDARD;
    out.push_back(d);
  }
  return out;
}

CameraMatrix solve_dlt(std::span<const Point2> points2d, std::span<const Point3> points3d) {
  if (points2d.size() != points3d.size())
    throw Error(ErrorCode::InvalidInput, "2D and 3D point counts differ", "points");
  if (points2d.size() < 6)
    throw Error(ErrorCode::InsufficientPoints,
                "DLT needs at least 6 correspondences, got " + std::to_string(points2d.size()), "points");
  for (const auto& p : points2d)
    if (!p.allFinite()) throw Error(ErrorCode::InvalidInput, "non-finite 2D point", "points2d");
  for (const auto& p : points3d)
    if (!p.allFinite()) throw Error(ErrorCode::InvalidInput, "non-finite 3D point", "points3d");
  if (coplanar(points3d)) throw Error(ErrorCode::DegenerateConfiguration, "3D points are coplanar", "points3d");
  const NormalizedSets ns = normalize_sets(points2d, points3d);
  try {
    return denormalize(dlt_core(ns.x, ns.X), ns.t2, ns.t3);
  } catch (const Error& e) {
    throw Error(ErrorCode::DegenerateConfiguration, std::string("DLT solution is singular: ") + e.what(), "points");
  }
}

std::vector<double> reprojection_errors(const CameraMatrix& cam, std::span<const Point2> points2d,
                                        std::span<const Point3> points3d) {
  std::vector<double> out;
  out.reserve(points2d.size());
  for (std::size_t i = 0; i < points2d.size(); ++i) out.push_back((project(cam, points3d[i]) - points2d[i]).norm());
  return out;
}

Correspondence resolve_correspondence(std::span<const Point3> ref3d, std::span<const Point2> ref2d) {
  if (ref2d.size() < 6)
    throw Error(ErrorCode::InsufficientPoints,
                "need at least 6 reference detections, got " + std::to_string(ref2d.size()), "points2d");
  if (ref3d.size() < ref2d.size())
    throw Error(ErrorCode::InvalidInput, "more 2D reference points than 3D reference beads", "points2d");
  if (ref3d.size() > 8) throw Error(ErrorCode::InvalidInput, "at most 8 reference beads are searched", "points3d");
  if (coplanar(ref3d)) throw Error(ErrorCode::DegenerateConfiguration, "reference beads are coplanar", "points3d");

  const NormalizedSets ns = normalize_sets(ref2d, ref3d);
  const int n3 = static_cast<int>(ref3d.size());
  std::vector<SearchBest> branch(static_cast<std::size_t>(n3));

#pragma omp parallel for schedule(dynamic, 1)
  for (int first = 0; first < n3; ++first) {
    std::vector<int> current{first};
    std::vector<char> used(static_cast<std::size_t>(n3), 0);
    used[static_cast<std::size_t>(first)] = 1;
    search(ref3d, ref2d, ns, current, used, branch[static_cast<std::size_t>(first)]);
  }

  SearchBest best;
  for (const auto& b : branch)
    if (b.error < best.error) best = b;
  if (!std::isfinite(best.error))
    throw Error(ErrorCode::NoSolution, "no correspondence yields a valid camera", "points2d");
  std::vector<Point3> matched;
  for (int i : best.assignment) matched.push_back(ref3d[static_cast<std::size_t>(i)]);
  const CameraMatrix cam = solve_dlt(ref2d, matched);
  return {best.assignment, cam, mean_error(cam, ref2d, ref3d, best.assignment)};
}

CalibrationResult rectify_all(const CameraMatrix& preliminary, std::span<const Point3> all3d,
                              std::span<const Point2> detected, double pixel_pitch_mm, double gate_px) {
  if (!(pixel_pitch_mm > 0.0)) throw Error(ErrorCode::InvalidInput, "pixel pitch must be > 0", "pitch_mm");
  std::vector<Point2> proj;
  for (const auto& x : all3d) {
    try {
      proj.push_back(project(preliminary, x));
    } catch (const Error&) {
      proj.push_back(Point2::Constant(std::numeric_limits<double>::infinity()));
    }
  }
  auto nearest = [](const Point2& q, std::span<const Point2> set) {
    int idx = -1;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < set.size(); ++i) {
      const double d = (set[i] - q).norm();
      if (d < best) best = d, idx = static_cast<int>(i);
    }
    return std::make_pair(idx, best);
  };

  CalibrationResult res;
  std::vector<Point2> p2;
  std::vector<Point3> p3;
  for (std::size_t i = 0; i < all3d.size(); ++i) {
    if (!proj[i].allFinite()) continue;
    const auto [j, d] = nearest(proj[i], detected);
    if (j < 0 || d > gate_px) continue;
    if (nearest(detected[static_cast<std::size_t>(j)], proj).first != static_cast<int>(i)) continue;
    res.point_ids.push_back(static_cast<int>(i));
    res.detection_ids.push_back(j);
    p2.push_back(detected[static_cast<std::size_t>(j)]);
    p3.push_back(all3d[i]);
  }
  if (p2.size() < 6)
    throw Error(ErrorCode::InsufficientPoints,
                "only " + std::to_string(p2.size()) + " fiducials matched within the gate", "points2d");

  res.camera = solve_dlt(p2, p3);
  res.decomposition = decompose_camera(res.camera);
  res.residuals_px = reprojection_errors(res.camera, p2, p3);
  const double n = static_cast<double>(res.residuals_px.size());
  res.mean_px = std::accumulate(res.residuals_px.begin(), res.residuals_px.end(), 0.0) / n;
  res.median_px = median_of(res.residuals_px);
  double ss = 0.0;
  for (double r : res.residuals_px) ss += (r - res.mean_px) * (r - res.mean_px);
  res.sd_px = n > 1 ? std::sqrt(ss / (n - 1)) : 0.0;
  res.pixel_pitch_mm = pixel_pitch_mm;
  res.mean_mm = res.mean_px * pixel_pitch_mm;
  res.median_mm = res.median_px * pixel_pitch_mm;
  return res;
}

CalibrationResult calibrate_detections(const std::vector<Detection>& detections, const FiducialSet& fiducials,
                                       double pixel_pitch_mm, Correspondence* correspondence) {
  fiducials.validate();
  std::vector<Point3> ref3d;
  for (int i : fiducials.indices_of(BeadClass::REFERENCE)) ref3d.push_back(fiducials.points3d[static_cast<std::size_t>(i)]);
  std::vector<const Detection*> refs;
  for (const auto& d : detections)
    if (d.bead_class == BeadClass::REFERENCE) refs.push_back(&d);
  std::stable_sort(refs.begin(), refs.end(), [](const Detection* a, const Detection* b) { return a->score > b->score; });
  std::vector<Point2> ref2d;
  for (const Detection* d : refs)
    if (ref2d.size() < ref3d.size()) ref2d.push_back(d->center);
  const Correspondence corr = resolve_correspondence(ref3d, ref2d);
  if (correspondence) *correspondence = corr;

  std::vector<Point2> all2d;
  for (const auto& d : detections) all2d.push_back(d.center);
  return rectify_all(corr.camera, fiducials.points3d, all2d, pixel_pitch_mm);
}

CalibrationResult calibrate_image(const ImageD& img, const FiducialSet& fiducials, const DetectOptions& opts,
                                  double pixel_pitch_mm) {
  return calibrate_detections(detect_fiducials(img, opts), fiducials, pixel_pitch_mm);
}

ImageD inpaint_fiducials(const ImageD& img, const std::vector<Detection>& detections, double radius_scale) {
  if (!(radius_scale > 0.0)) throw Error(ErrorCode::InvalidInput, "radius_scale must be > 0", "radius_scale");
  ImageD out = img;
  fill_masked(out, disc_mask(img.width, img.height, detections, radius_scale));
  return out;
}

Image16 inpaint_fiducials(const Image16& img, const std::vector<Detection>& detections, double radius_scale) {
  if (!(radius_scale > 0.0)) throw Error(ErrorCode::InvalidInput, "radius_scale must be > 0", "radius_scale");
  const auto mask = disc_mask(img.width, img.height, detections, radius_scale);
  ImageD work = to_double(img);
  fill_masked(work, mask);
  Image16 out = img;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) out.data[i] = static_cast<std::uint16_t>(std::lround(std::clamp(work.data[i], 0.0, 65535.0)));
  return out;
}

}  // namespace frk
