#include <frk/metrics.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <unordered_map>

namespace frk {

Overlap voxel_overlap(const VolumeLabels& pred, const VolumeLabels& gt) {
  if (!(pred.lattice == gt.lattice)) throw Error(ErrorCode::IncompatibleGrids, "grids differ in lattice", "lattice");
  Overlap o;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred.data[i] != 0, g = gt.data[i] != 0;
    o.counts.tp += p && g;
    o.counts.fp += p && !g;
    o.counts.fn += !p && g;
  }
  const double tp = static_cast<double>(o.counts.tp);
  const double fp = static_cast<double>(o.counts.fp);
  const double fn = static_cast<double>(o.counts.fn);
  if (tp + fp + fn == 0.0) {
    o.f1 = o.iou = 1.0;
  } else {
    o.f1 = 2.0 * tp / (2.0 * tp + fp + fn);
    o.iou = tp / (tp + fp + fn);
  }
  return o;
}

std::vector<Point3> extract_surface(const VolumeLabels& grid) {
  const auto& d = grid.dims();
  auto occ = [&](int i, int j, int k) {
    return i >= 0 && j >= 0 && k >= 0 && i < d.x() && j < d.y() && k < d.z() && grid.at(i, j, k) != 0;
  };
  std::vector<Point3> out;
  for (int k = 0; k < d.z(); ++k)
    for (int j = 0; j < d.y(); ++j)
      for (int i = 0; i < d.x(); ++i)
        if (occ(i, j, k) && (!occ(i - 1, j, k) || !occ(i + 1, j, k) || !occ(i, j - 1, k) || !occ(i, j + 1, k) ||
                             !occ(i, j, k - 1) || !occ(i, j, k + 1)))
          out.push_back(grid.lattice.center_of(i, j, k));
  return out;
}

namespace {

struct HashGrid {
  double cell = 1.0;
  Point3 lo;
  Eigen::Vector3i extent;  ///< number of occupied cell indices per axis
  std::unordered_map<std::int64_t, std::vector<int>> cells;

  static std::int64_t key(int x, int y, int z) {
    return (static_cast<std::int64_t>(x) << 42) ^ (static_cast<std::int64_t>(y) << 21) ^ static_cast<std::int64_t>(z);
  }
  Eigen::Vector3i cell_of(const Point3& p) const { return ((p - lo) / cell).array().floor().cast<int>(); }

  explicit HashGrid(std::span<const Point3> pts) {
    Eigen::AlignedBox3d box;
    for (const auto& p : pts) box.extend(p);
    lo = box.min();
    const Point3 size = box.sizes();
    const double vol = std::max(size.x(), 1e-9) * std::max(size.y(), 1e-9) * std::max(size.z(), 1e-9);
    cell = std::max({2.0 * std::cbrt(vol / static_cast<double>(pts.size())), size.maxCoeff() / 256.0, 1e-9});
    extent = (size / cell).array().floor().cast<int>() + 1;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const auto c = cell_of(pts[i]);
      cells[key(c.x(), c.y(), c.z())].push_back(static_cast<int>(i));
    }
  }
};

}  // namespace

std::vector<double> nearest_distances(std::span<const Point3> from, std::span<const Point3> to) {
  if (to.empty()) throw Error(ErrorCode::EmptySurface, "nearest neighbour query against an empty set", "points");
  const HashGrid grid(to);
  std::vector<double> out(from.size());
  const int n_from = static_cast<int>(from.size());

#pragma omp parallel for schedule(dynamic, 64)
  for (int qi = 0; qi < n_from; ++qi) {
    const Point3& q = from[static_cast<std::size_t>(qi)];
    const Eigen::Vector3i qc = grid.cell_of(q);
    // Chebyshev rings of cells around the query cell, starting at the first
    // ring that reaches the occupied block and ending at the one covering it.
    int min_ring = 0, max_ring = 0;
    for (int a = 0; a < 3; ++a) {
      min_ring = std::max({min_ring, -qc[a], qc[a] - (grid.extent[a] - 1)});
      max_ring = std::max({max_ring, std::abs(qc[a]), std::abs(grid.extent[a] - 1 - qc[a])});
    }
    double best = std::numeric_limits<double>::infinity();
    for (int r = min_ring; r <= max_ring; ++r) {
      const Eigen::Vector3i lo = (qc.array() - r).max(0);
      const Eigen::Vector3i hi = (qc.array() + r).min(grid.extent.array() - 1);
      for (int z = lo.z(); z <= hi.z(); ++z)
        for (int y = lo.y(); y <= hi.y(); ++y)
          for (int x = lo.x(); x <= hi.x(); ++x) {
            if (std::max({std::abs(x - qc.x()), std::abs(y - qc.y()), std::abs(z - qc.z())}) != r) continue;
            const auto it = grid.cells.find(HashGrid::key(x, y, z));
            if (it == grid.cells.end()) continue;
            for (int idx : it->second) best = std::min(best, (q - to[static_cast<std::size_t>(idx)]).norm());
          }
      // every point beyond ring r is at least r cells away
      if (best <= r * grid.cell) break;
    }
    out[static_cast<std::size_t>(qi)] = best;
  }
  return out;
}

double percentile(std::vector<double> values, double p) {
  if (values.empty()) throw Error(ErrorCode::EmptySurface, "percentile of an empty set", "points");
  std::sort(values.begin(), values.end());
  const double pos = std::clamp(p, 0.0, 1.0) * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double f = pos - static_cast<double>(lo);
  return values[lo] + f * (values[hi] - values[lo]);
}

namespace {

double mean_of(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

void require_nonempty(std::span<const Point3> a, std::span<const Point3> b) {
  if (a.empty() || b.empty()) throw Error(ErrorCode::EmptySurface, "surface point set is empty", "surface");
}

}  // namespace

SurfaceDistances surface_distances(std::span<const Point3> a, std::span<const Point3> b) {
  require_nonempty(a, b);
  SurfaceDistances s;
  s.a_to_b = nearest_distances(a, b);
  s.b_to_a = nearest_distances(b, a);
  s.asd_mm = 0.5 * (mean_of(s.a_to_b) + mean_of(s.b_to_a));
  s.hd95_mm = std::max(percentile(s.a_to_b, 0.95), percentile(s.b_to_a, 0.95));
  return s;
}

SurfaceScore surface_score_detail(std::span<const Point3> pred, std::span<const Point3> gt, double tau_mm) {
  require_nonempty(pred, gt);
  if (!(tau_mm > 0.0)) throw Error(ErrorCode::InvalidInput, "tau must be > 0", "tau_mm");
  auto within = [tau_mm](const std::vector<double>& d) {
    return static_cast<double>(std::count_if(d.begin(), d.end(), [tau_mm](double x) { return x <= tau_mm; })) /
           static_cast<double>(d.size());
  };
  SurfaceScore s;
  s.precision = within(nearest_distances(pred, gt));
  s.recall = within(nearest_distances(gt, pred));
  s.score = s.precision + s.recall > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  return s;
}

double surface_score(std::span<const Point3> pred, std::span<const Point3> gt, double tau_mm) {
  return surface_score_detail(pred, gt, tau_mm).score;
}

std::vector<double> DistanceMap::display_mm() const {
  std::vector<double> out(dist_mm.size());
  std::transform(dist_mm.begin(), dist_mm.end(), out.begin(), [this](double d) { return std::min(d, clip_mm); });
  return out;
}

std::string DistanceMap::to_csv() const {
  std::string out = "x_mm,y_mm,z_mm,dist_mm\n";
  char buf[128];
  for (std::size_t i = 0; i < points.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.6f,%.6f\n", points[i].x(), points[i].y(), points[i].z(), dist_mm[i]);
    out += buf;
  }
  return out;
}

VolumeLabels DistanceMap::display_volume(const Lattice& lattice) const {
  VolumeLabels out(lattice, 0);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Eigen::Vector3i g = lattice.to_voxel(points[i]).array().round().cast<int>();
    if ((g.array() < 0).any() || (g.array() >= lattice.dims.array()).any()) continue;
    const double t = std::min(dist_mm[i], clip_mm) / clip_mm;
    out.at(g.x(), g.y(), g.z()) = static_cast<std::uint8_t>(1 + std::lround(254.0 * t));
  }
  return out;
}

DistanceMap distance_map(const VolumeLabels& pred, const VolumeLabels& gt, double clip_mm) {
  if (!(clip_mm > 0.0)) throw Error(ErrorCode::InvalidInput, "clip must be > 0", "clip_mm");
  DistanceMap m;
  m.clip_mm = clip_mm;
  m.points = extract_surface(pred);
  const auto ref = extract_surface(gt);
  require_nonempty(m.points, ref);
  m.dist_mm = nearest_distances(m.points, ref);
  return m;
}

MetricsReport evaluate_grids(const VolumeLabels& pred, const VolumeLabels& gt, double tau_mm) {
  const Overlap o = voxel_overlap(pred, gt);
  MetricsReport r;
  r.f1 = o.f1;
  r.iou = o.iou;
  r.counts = o.counts;
  r.tau_mm = tau_mm;
  const auto ps = extract_surface(pred);
  const auto gs = extract_surface(gt);
  r.pred_surface_points = ps.size();
  r.gt_surface_points = gs.size();
  const SurfaceDistances sd = surface_distances(ps, gs);
  r.asd_mm = sd.asd_mm;
  r.hd95_mm = sd.hd95_mm;
  auto within = [tau_mm](const std::vector<double>& d) {
    return static_cast<double>(std::count_if(d.begin(), d.end(), [tau_mm](double x) { return x <= tau_mm; })) /
           static_cast<double>(d.size());
  };
  const double p = within(sd.a_to_b), rc = within(sd.b_to_a);
  r.surface_score = p + rc > 0.0 ? 2.0 * p * rc / (p + rc) : 0.0;
  return r;
}

}  // namespace frk
