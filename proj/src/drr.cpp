#include <frk/drr.hpp>

#include <algorithm>
#include <cmath>

namespace frk {

namespace {

struct RaySpan {
  double t0 = 0.0;
  double t1 = -1.0;
  bool hit() const { return t1 > t0; }
};

RaySpan clip_ray(const Point3& origin, const Point3& dir, const Eigen::AlignedBox3d& box) {
  RaySpan s{0.0, std::numeric_limits<double>::infinity()};
  for (int a = 0; a < 3; ++a) {
    if (std::abs(dir[a]) < 1e-15) {
      if (origin[a] < box.min()[a] || origin[a] > box.max()[a]) return {0.0, -1.0};
      continue;
    }
    double ta = (box.min()[a] - origin[a]) / dir[a];
    double tb = (box.max()[a] - origin[a]) / dir[a];
    if (ta > tb) std::swap(ta, tb);
    s.t0 = std::max(s.t0, ta);
    s.t1 = std::min(s.t1, tb);
  }
  return s;
}

/// Trilinear interpolation with clamp-to-edge at voxel coordinate c.
struct Sampler {
  const VolumeF& vol;
  int nx, ny, nz;
  std::size_t sx, sxy;

  explicit Sampler(const VolumeF& v)
      : vol(v),
        nx(v.dims().x()),
        ny(v.dims().y()),
        nz(v.dims().z()),
        sx(static_cast<std::size_t>(nx)),
        sxy(static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny)) {}

  static void axis(double c, int n, int& i0, int& i1, double& f) {
    c = std::clamp(c, 0.0, static_cast<double>(n - 1));
    i0 = std::min(static_cast<int>(c), std::max(n - 2, 0));
    i1 = std::min(i0 + 1, n - 1);
    f = c - i0;
  }

  double operator()(const Point3& c) const {
    int x0, x1, y0, y1, z0, z1;
    double fx, fy, fz;
    axis(c.x(), nx, x0, x1, fx);
    axis(c.y(), ny, y0, y1, fy);
    axis(c.z(), nz, z0, z1, fz);
    const float* d = vol.data.data();
    auto at = [&](int i, int j, int k) {
      return static_cast<double>(d[static_cast<std::size_t>(k) * sxy + static_cast<std::size_t>(j) * sx +
                                   static_cast<std::size_t>(i)]);
    };
    const double c00 = at(x0, y0, z0) * (1 - fx) + at(x1, y0, z0) * fx;
    const double c10 = at(x0, y1, z0) * (1 - fx) + at(x1, y1, z0) * fx;
    const double c01 = at(x0, y0, z1) * (1 - fx) + at(x1, y0, z1) * fx;
    const double c11 = at(x0, y1, z1) * (1 - fx) + at(x1, y1, z1) * fx;
    const double c0 = c00 * (1 - fy) + c10 * fy;
    const double c1 = c01 * (1 - fy) + c11 * fy;
    return c0 * (1 - fz) + c1 * fz;
  }
};

void check_outside(const Lattice& lattice, const Point3& x_o) {
  if (lattice.bounds().contains(x_o))
    throw Error(ErrorCode::UnsupportedConfiguration, "camera focal point lies inside the volume");
}

}  // namespace

Image16 DrrImage::normalized() const {
  Image16 out(width, height, 0);
  const double mx = raw.data.empty() ? 0.0 : *std::max_element(raw.data.begin(), raw.data.end());
  if (!(mx > 0.0)) return out;
  for (std::size_t i = 0; i < raw.size(); ++i)
    out.data[i] = static_cast<std::uint16_t>(std::lround(std::clamp(raw.data[i] / mx, 0.0, 1.0) * 65535.0));
  return out;
}

double default_step(const Lattice& lattice) { return 0.5 * lattice.spacing_mm.minCoeff(); }

Point3 pixel_ray(const CameraMatrix& cam, double u, double v) {
  const CameraMatrix n = cam.normalize();
  return (n.left().inverse() * Point3(u, v, 1.0)).normalized();
}

DrrImage render_drr(const VolumeF& attenuation, const CameraMatrix& cam, int width, int height, double step_mm,
                    double pixel_pitch_mm) {
  if (!(step_mm > 0.0) || !std::isfinite(step_mm))
    throw Error(ErrorCode::InvalidInput, "step_mm must be > 0", "step_mm");
  if (width < 1 || height < 1) throw Error(ErrorCode::InvalidInput, "image size must be >= 1", "width");
  const CameraMatrix ncam = cam.normalize();
  const Point3 x_o = decompose_camera(ncam).x_o;
  const Lattice& lat = attenuation.lattice;
  check_outside(lat, x_o);

  DrrImage img{width, height, pixel_pitch_mm, ImageD(width, height, 0.0)};
  const Eigen::Matrix3d m_inv = ncam.left().inverse();
  const auto box = lat.bounds();
  const Sampler sample(attenuation);
  const Point3 inv_spacing = lat.spacing_mm.cwiseInverse();

#pragma omp parallel for schedule(dynamic, 4)
  for (int v = 0; v < height; ++v) {
    for (int u = 0; u < width; ++u) {
      const Point3 dir = (m_inv * Point3(u + 0.5, v + 0.5, 1.0)).normalized();
      const RaySpan span = clip_ray(x_o, dir, box);
      if (!span.hit()) continue;
      const double len = span.t1 - span.t0;
      const long n = static_cast<long>(std::ceil(len / step_mm - 0.5));
      const Point3 c0 = (x_o + dir * (span.t0 + 0.5 * step_mm) - lat.origin_mm).cwiseProduct(inv_spacing);
      const Point3 dc = (dir * step_mm).cwiseProduct(inv_spacing);
      double acc = 0.0;
      for (long k = 0; k < n; ++k) acc += sample(c0 + static_cast<double>(k) * dc);
      img.raw(u, v) = acc * step_mm;
    }
  }
  return img;
}

Image8 render_mask(const VolumeLabels& labels, std::uint8_t id, const CameraMatrix& cam, int width, int height,
                   double step_mm) {
  if (width < 1 || height < 1) throw Error(ErrorCode::InvalidInput, "image size must be >= 1", "width");
  const Lattice& lat = labels.lattice;
  if (step_mm <= 0.0) step_mm = default_step(lat);
  const CameraMatrix ncam = cam.normalize();
  const Point3 x_o = decompose_camera(ncam).x_o;
  check_outside(lat, x_o);

  Image8 out(width, height, 0);
  // Indicator sub-volume over the label's voxels padded by one voxel of zeros.
  Eigen::Vector3i lo = lat.dims, hi = Eigen::Vector3i::Constant(-1);
  for (int k = 0; k < lat.dims.z(); ++k)
    for (int j = 0; j < lat.dims.y(); ++j)
      for (int i = 0; i < lat.dims.x(); ++i)
        if (labels.at(i, j, k) == id) {
          lo = lo.cwiseMin(Eigen::Vector3i(i, j, k));
          hi = hi.cwiseMax(Eigen::Vector3i(i, j, k));
        }
  if ((hi.array() < 0).any()) return out;
  lo.array() -= 1;
  hi.array() += 1;
  Lattice sub;
  sub.dims = hi - lo + Eigen::Vector3i::Ones();
  sub.spacing_mm = lat.spacing_mm;
  sub.origin_mm = lat.center_of(lo.x(), lo.y(), lo.z());
  VolumeF ind(sub, 0.0f);
  for (int k = 0; k < sub.dims.z(); ++k)
    for (int j = 0; j < sub.dims.y(); ++j)
      for (int i = 0; i < sub.dims.x(); ++i) {
        const Eigen::Vector3i g = lo + Eigen::Vector3i(i, j, k);
        if ((g.array() >= 0).all() && (g.array() < lat.dims.array()).all() && labels.at(g.x(), g.y(), g.z()) == id)
          ind.at(i, j, k) = 1.0f;
      }

  const Eigen::Matrix3d m_inv = ncam.left().inverse();
  const auto box = sub.bounds();
  const Sampler sample(ind);
  const Point3 inv_spacing = sub.spacing_mm.cwiseInverse();

  // Only pixels inside the projected footprint of the sub-volume can be hit.
  int u_lo = width, u_hi = -1, v_lo = height, v_hi = -1;
  for (int c = 0; c < 8; ++c) {
    const Point3 corner = box.corner(static_cast<Eigen::AlignedBox3d::CornerType>(c));
    const Point3 h = ncam.left() * corner + ncam.last_column();
    if (h.z() <= 0.0) {
      u_lo = 0, u_hi = width - 1, v_lo = 0, v_hi = height - 1;
      break;
    }
    u_lo = std::min(u_lo, static_cast<int>(std::floor(h.x() / h.z())) - 1);
    u_hi = std::max(u_hi, static_cast<int>(std::ceil(h.x() / h.z())) + 1);
    v_lo = std::min(v_lo, static_cast<int>(std::floor(h.y() / h.z())) - 1);
    v_hi = std::max(v_hi, static_cast<int>(std::ceil(h.y() / h.z())) + 1);
  }
  u_lo = std::max(u_lo, 0), v_lo = std::max(v_lo, 0);
  u_hi = std::min(u_hi, width - 1), v_hi = std::min(v_hi, height - 1);

#pragma omp parallel for schedule(dynamic, 4)
  for (int v = v_lo; v <= v_hi; ++v) {
    for (int u = u_lo; u <= u_hi; ++u) {
      const Point3 dir = (m_inv * Point3(u + 0.5, v + 0.5, 1.0)).normalized();
      const RaySpan span = clip_ray(x_o, dir, box);
      if (!span.hit()) continue;
      const long n = static_cast<long>(std::ceil((span.t1 - span.t0) / step_mm - 0.5));
      const Point3 c0 = (x_o + dir * (span.t0 + 0.5 * step_mm) - sub.origin_mm).cwiseProduct(inv_spacing);
      const Point3 dc = (dir * step_mm).cwiseProduct(inv_spacing);
      for (long k = 0; k < n; ++k) {
        if (sample(c0 + static_cast<double>(k) * dc) >= 0.5) {
          out(u, v) = 1;
          break;
        }
      }
    }
  }
  return out;
}

void add_beads(DrrImage& img, const CameraMatrix& cam, const std::vector<Bead>& beads, double attenuation_per_mm) {
  const CameraMatrix ncam = cam.normalize();
  const Point3 x_o = decompose_camera(ncam).x_o;
  const Eigen::Matrix3d m_inv = ncam.left().inverse();
  constexpr int kSub = 4;
  for (const auto& bead : beads) {
    const double r = 0.5 * bead.diameter_mm;
    const Point3 rel = bead.center - x_o;
    const double dist = rel.norm();
    if (dist <= r) throw Error(ErrorCode::UnsupportedConfiguration, "focal point inside a bead");
    const Point2 c = project(ncam, bead.center);
    // generous pixel radius bound: f * r / sqrt(d^2 - r^2) scaled by the largest focal length
    const double f = std::max(std::abs(ncam.left().row(0).norm()), std::abs(ncam.left().row(1).norm()));
    const double rad_px = f * r / std::sqrt(dist * dist - r * r) * 1.5 + 2.0;
    const int u0 = std::max(0, static_cast<int>(std::floor(c.x() - rad_px)));
    const int u1 = std::min(img.width - 1, static_cast<int>(std::ceil(c.x() + rad_px)));
    const int v0 = std::max(0, static_cast<int>(std::floor(c.y() - rad_px)));
    const int v1 = std::min(img.height - 1, static_cast<int>(std::ceil(c.y() + rad_px)));
    for (int v = v0; v <= v1; ++v)
      for (int u = u0; u <= u1; ++u) {
        double acc = 0.0;
        for (int sv = 0; sv < kSub; ++sv)
          for (int su = 0; su < kSub; ++su) {
            const Point3 dir =
                (m_inv * Point3(u + (su + 0.5) / kSub, v + (sv + 0.5) / kSub, 1.0)).normalized();
            const double along = rel.dot(dir);
            const double rho2 = rel.squaredNorm() - along * along;
            if (rho2 < r * r) acc += 2.0 * std::sqrt(r * r - rho2);
          }
        img.raw(u, v) += attenuation_per_mm * acc / (kSub * kSub);
      }
  }
}

PairedRender render_paired(const VolumeF& attenuation, const VolumeLabels& labels, const CameraMatrix& cam,
                           int width, int height, const std::vector<Bead>& beads, const PairedOptions& opts) {
  const double step = opts.step_mm > 0.0 ? opts.step_mm : default_step(attenuation.lattice);
  PairedRender out;
  out.drr = render_drr(attenuation, cam, width, height, step, opts.pixel_pitch_mm);
  add_beads(out.drr, cam, beads, opts.bead_attenuation);
  for (auto id : label_ids(labels)) out.masks.emplace(id, render_mask(labels, id, cam, width, height, step));
  out.bead_projections.reserve(beads.size());
  for (const auto& b : beads) out.bead_projections.push_back(project(cam, b.center));
  return out;
}

}  // namespace frk
