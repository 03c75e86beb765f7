#include <frk/carve.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>

namespace frk {

std::string_view to_string(OriginMode m) { return m == OriginMode::TRIANGULATED ? "TRIANGULATED" : "GROUND_TRUTH"; }
std::string_view to_string(CarveMode m) { return m == CarveMode::HULL ? "hull" : "mean_thresh"; }

CarveMode carve_mode_from_string(std::string_view s) {
  if (s == "hull" || s == "HULL") return CarveMode::HULL;
  if (s == "mean_thresh" || s == "MEAN_THRESH" || s == "mean-thresh") return CarveMode::MEAN_THRESH;
  throw Error(ErrorCode::InvalidInput, "unknown carve mode '" + std::string(s) + "'", "mode");
}

std::size_t OccupancyGrid::occupied() const {
  return static_cast<std::size_t>(std::count_if(volume.data.begin(), volume.data.end(), [](auto v) { return v != 0; }));
}

double OccupancyGrid::occupied_fraction() const {
  return volume.size() ? static_cast<double>(occupied()) / static_cast<double>(volume.size()) : 0.0;
}

Lattice cube_lattice(const Point3& center, int dims, double voxel_mm) {
  if (dims < 1) throw Error(ErrorCode::InvalidInput, "grid dims must be >= 1", "dims");
  if (!(voxel_mm > 0.0)) throw Error(ErrorCode::InvalidInput, "voxel size must be > 0", "voxel_mm");
  if (!center.allFinite()) throw Error(ErrorCode::InvalidInput, "origin must be finite", "origin");
  Lattice l;
  l.dims = Eigen::Vector3i::Constant(dims);
  l.spacing_mm = Point3::Constant(voxel_mm);
  const Point3 corner = center.array() - 0.5 * dims * voxel_mm;
  const Point3 snapped = (corner / voxel_mm).array().round() * voxel_mm;
  l.origin_mm = snapped.array() + 0.5 * voxel_mm;
  return l;
}

Point3 estimate_origin(const std::vector<CameraMatrix>& adjusted, int crop_size) {
  const std::vector<Point2> centers(adjusted.size(), Point2::Constant(0.5 * crop_size));
  return triangulate_origin(adjusted, centers);
}

Point3 estimate_origin(const std::vector<CropWindow>& crops) {
  std::vector<CameraMatrix> cams;
  for (const auto& c : crops) cams.push_back(c.adjusted);
  const int size = crops.empty() ? kCropSize : crops.front().image.width;
  return estimate_origin(cams, size);
}

OccupancyGrid carve(const std::vector<CarveView>& views, const Lattice& cube, const CarveOptions& opts) {
  if (views.size() < 2) throw Error(ErrorCode::InsufficientViews, "carving needs at least 2 views", "views");
  cube.validate();
  const int nv = static_cast<int>(views.size());
  const int k_req = opts.min_views > 0 ? std::min(opts.min_views, nv) : nv;

  struct Prepared {
    const ImageD* img;
    Eigen::Matrix3d m;
    Point3 t;
    double inv_max;
  };
  std::vector<Prepared> prep;
  for (const auto& v : views) {
    const double mx = v.image.data.empty() ? 0.0 : *std::max_element(v.image.data.begin(), v.image.data.end());
    prep.push_back({&v.image, v.cam.left(), v.cam.last_column(), mx > 0.0 ? 1.0 / mx : 0.0});
  }

  OccupancyGrid grid{VolumeLabels(cube, 0), OriginMode::TRIANGULATED};
  const auto& d = cube.dims;
  const bool hull = opts.mode == CarveMode::HULL;

#pragma omp parallel for schedule(dynamic, 1)
  for (int k = 0; k < d.z(); ++k) {
    std::vector<double> samples(static_cast<std::size_t>(nv));
    for (int j = 0; j < d.y(); ++j) {
      for (int i = 0; i < d.x(); ++i) {
        const Point3 x = cube.center_of(i, j, k);
        int seen = 0;
        double sum = 0.0;
        bool occupied = true;
        for (int vi = 0; vi < nv; ++vi) {
          const auto& p = prep[static_cast<std::size_t>(vi)];
          const Point3 h = p.m * x + p.t;
          double s = 0.0;
          bool in = false;
          if (h.z() > 0.0) {
            const double uf = std::floor(h.x() / h.z()), vf = std::floor(h.y() / h.z());
            if (uf >= 0.0 && vf >= 0.0 && uf < p.img->width && vf < p.img->height) {
              in = true;
              s = (*p.img)(static_cast<int>(uf), static_cast<int>(vf));
            }
          }
          if (hull) {
            if (!(s > 0.0)) {
              occupied = false;
              break;
            }
          } else if (in) {
            ++seen;
            sum += s * p.inv_max;
          }
        }
        if (!hull) occupied = seen >= k_req && seen > 0 && sum / seen >= opts.tau;
        if (occupied) grid.volume.at(i, j, k) = 1;
      }
    }
  }
  return grid;
}

namespace {

double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

Reconstruction reconstruct_views(const std::vector<CarveView>& views, const CarveOptions& opts,
                                 const std::optional<Point3>& ground_truth_center) {
  if (views.size() < 2) throw Error(ErrorCode::InsufficientViews, "reconstruction needs at least 2 views", "views");
  Reconstruction out;
  auto t0 = std::chrono::steady_clock::now();
  if (ground_truth_center) {
    out.center = *ground_truth_center;
  } else {
    std::vector<CameraMatrix> cams;
    std::vector<Point2> centers;
    for (const auto& v : views) {
      cams.push_back(v.cam);
      centers.emplace_back(0.5 * v.image.width, 0.5 * v.image.height);
    }
    out.center = triangulate_origin(cams, centers);
  }
  out.origin_ms = ms_since(t0);
  t0 = std::chrono::steady_clock::now();
  out.grid = carve(views, cube_lattice(out.center, opts.dims, opts.voxel_mm), opts);
  out.grid.provenance = ground_truth_center ? OriginMode::GROUND_TRUTH : OriginMode::TRIANGULATED;
  out.carve_ms = ms_since(t0);
  return out;
}

Reconstruction reconstruct(const std::vector<CropWindow>& crops, const CarveOptions& opts,
                           const std::optional<Point3>& ground_truth_center) {
  std::vector<CarveView> views;
  for (const auto& c : crops) {
    if (opts.mode == CarveMode::HULL) {
      if (c.mask.size() == 0) throw Error(ErrorCode::InvalidInput, "HULL carving needs mask crops", "mask");
      views.push_back({to_double(c.mask), c.adjusted});
    } else {
      views.push_back({c.image, c.adjusted});
    }
  }
  return reconstruct_views(views, opts, ground_truth_center);
}

VolumeLabels ground_truth_grid(const Phantom& ph, std::uint8_t label, const Lattice& lattice) {
  return rasterize_label(ph, label, lattice);
}

VolumeLabels ground_truth_grid(const VolumeLabels& labels, std::uint8_t label, const Lattice& lattice) {
  VolumeLabels out(lattice, 0);
  const auto& src = labels.lattice;
  for (int k = 0; k < lattice.dims.z(); ++k)
    for (int j = 0; j < lattice.dims.y(); ++j)
      for (int i = 0; i < lattice.dims.x(); ++i) {
        const Point3 c = src.to_voxel(lattice.center_of(i, j, k));
        const Eigen::Vector3i g = c.array().round().cast<int>();
        if ((g.array() < 0).any() || (g.array() >= src.dims.array()).any()) continue;
        if (labels.at(g.x(), g.y(), g.z()) == label) out.at(i, j, k) = 1;
      }
  return out;
}

Lattice expand_to_cover(const Lattice& lattice, const Eigen::AlignedBox3d& box) {
  if (box.isEmpty()) return lattice;
  const auto have = lattice.bounds();
  Lattice out = lattice;
  for (int a = 0; a < 3; ++a) {
    const double s = lattice.spacing_mm[a];
    const int lo = std::max(0, static_cast<int>(std::ceil((have.min()[a] - box.min()[a]) / s - 1e-9)));
    const int hi = std::max(0, static_cast<int>(std::ceil((box.max()[a] - have.max()[a]) / s - 1e-9)));
    out.origin_mm[a] -= lo * s;
    out.dims[a] += lo + hi;
  }
  return out;
}

VolumeLabels embed(const VolumeLabels& grid, const Lattice& target) {
  VolumeLabels out(target, 0);
  const Point3 off = target.to_voxel(grid.lattice.origin_mm);
  const Eigen::Vector3i o = off.array().round().cast<int>();
  if ((off - o.cast<double>()).cwiseAbs().maxCoeff() > 1e-6 || grid.lattice.spacing_mm != target.spacing_mm)
    throw Error(ErrorCode::IncompatibleGrids, "target lattice does not share spacing and phase", "lattice");
  const auto& d = grid.dims();
  for (int k = 0; k < d.z(); ++k)
    for (int j = 0; j < d.y(); ++j)
      for (int i = 0; i < d.x(); ++i) {
        const Eigen::Vector3i g = o + Eigen::Vector3i(i, j, k);
        if ((g.array() < 0).any() || (g.array() >= target.dims.array()).any()) continue;
        out.at(g.x(), g.y(), g.z()) = grid.at(i, j, k);
      }
  return out;
}

}  // namespace frk
