#include <frk/phantom.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

namespace frk {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

bool positive_extent(const Shape& s) {
  return std::visit(overloaded{
                        [](const Sphere& sp) { return sp.radius > 0.0; },
                        [](const Box& b) { return (b.half_extents.array() > 0.0).all(); },
                        [](const Cylinder& c) { return c.radius > 0.0 && (c.p1 - c.p0).norm() > 0.0; },
                    },
                    s);
}

Shape transform_shape(const Shape& s, const Isometry3<double>& m) {
  return std::visit(overloaded{
                        [&](const Sphere& sp) -> Shape { return Sphere{m * sp.center, sp.radius}; },
                        [&](const Box& b) -> Shape { return Box{m * b.center, b.half_extents, m.linear() * b.rotation}; },
                        [&](const Cylinder& c) -> Shape { return Cylinder{m * c.p0, m * c.p1, c.radius}; },
                    },
                    s);
}

Eigen::Matrix3d rot_x(double deg) {
  return Eigen::AngleAxisd(deg * std::numbers::pi / 180.0, Eigen::Vector3d::UnitX()).toRotationMatrix();
}

}  // namespace

bool contains(const Shape& shape, const Point3& x) {
  return std::visit(overloaded{
                        [&](const Sphere& s) { return (x - s.center).squaredNorm() <= s.radius * s.radius; },
                        [&](const Box& b) {
                          const Point3 local = b.rotation.transpose() * (x - b.center);
                          return (local.cwiseAbs().array() <= b.half_extents.array()).all();
                        },
                        [&](const Cylinder& c) {
                          const Point3 axis = c.p1 - c.p0;
                          const double len2 = axis.squaredNorm();
                          const double t = (x - c.p0).dot(axis);
                          if (t < 0.0 || t > len2) return false;
                          const Point3 radial = (x - c.p0) - axis * (t / len2);
                          return radial.squaredNorm() <= c.radius * c.radius;
                        },
                    },
                    shape);
}

Eigen::AlignedBox3d bounds(const Shape& shape) {
  return std::visit(overloaded{
                        [](const Sphere& s) {
                          return Eigen::AlignedBox3d(s.center.array() - s.radius, s.center.array() + s.radius);
                        },
                        [](const Box& b) {
                          const Point3 ext = b.rotation.cwiseAbs() * b.half_extents;
                          return Eigen::AlignedBox3d(b.center - ext, b.center + ext);
                        },
                        [](const Cylinder& c) {
                          Eigen::AlignedBox3d box(c.p0);
                          box.extend(c.p1);
                          return Eigen::AlignedBox3d(box.min().array() - c.radius, box.max().array() + c.radius);
                        },
                    },
                    shape);
}

void Phantom::validate() const {
  for (const auto& p : primitives) {
    if (!positive_extent(p.shape)) throw Error(ErrorCode::InvalidInput, "primitive with non-positive extent", "shape");
    if (!(p.hu >= -1024.0 && p.hu <= 3071.0))
      throw Error(ErrorCode::InvalidInput, "primitive HU outside [-1024, 3071]", "hu");
  }
  for (const auto& b : beads)
    if (!(b.diameter_mm > 0.0)) throw Error(ErrorCode::InvalidInput, "bead diameter must be > 0", "diameter_mm");
}

Phantom Phantom::transformed(const Isometry3<double>& motion) const {
  Phantom out = *this;
  for (auto& p : out.primitives) p.shape = transform_shape(p.shape, motion);
  for (auto& b : out.beads) b.center = motion * b.center;
  return out;
}

Eigen::AlignedBox3d Phantom::bounds() const {
  Eigen::AlignedBox3d box;
  for (const auto& p : primitives) box.extend(frk::bounds(p.shape));
  return box;
}

Eigen::AlignedBox3d Phantom::label_bounds(std::uint8_t id) const {
  Eigen::AlignedBox3d box;
  for (const auto& p : primitives)
    if (p.label == id) box.extend(frk::bounds(p.shape));
  return box;
}

std::vector<std::uint8_t> Phantom::label_ids() const {
  std::set<std::uint8_t> ids;
  for (const auto& p : primitives)
    if (p.label != 0) ids.insert(p.label);
  return {ids.begin(), ids.end()};
}

std::pair<VolumeHU, VolumeLabels> rasterize_phantom(const Phantom& ph, const Lattice& lattice) {
  lattice.validate();
  VolumeHU hu(lattice, 0);
  VolumeLabels labels(lattice, 0);
  const Eigen::Vector3i& d = lattice.dims;
  for (const auto& prim : ph.primitives) {
    const auto box = frk::bounds(prim.shape);
    const Point3 lo = lattice.to_voxel(box.min());
    const Point3 hi = lattice.to_voxel(box.max());
    const int i0 = std::max(0, static_cast<int>(std::ceil(lo.x()))), i1 = std::min(d.x() - 1, static_cast<int>(std::floor(hi.x())));
    const int j0 = std::max(0, static_cast<int>(std::ceil(lo.y()))), j1 = std::min(d.y() - 1, static_cast<int>(std::floor(hi.y())));
    const int k0 = std::max(0, static_cast<int>(std::ceil(lo.z()))), k1 = std::min(d.z() - 1, static_cast<int>(std::floor(hi.z())));
    const auto value = static_cast<std::int16_t>(std::lround(prim.hu));
    for (int k = k0; k <= k1; ++k)
      for (int j = j0; j <= j1; ++j)
        for (int i = i0; i <= i1; ++i) {
          if (!contains(prim.shape, lattice.center_of(i, j, k))) continue;
          const auto idx = lattice.index(i, j, k);
          hu.data[idx] = value;
          labels.data[idx] = prim.label;
        }
  }
  return {std::move(hu), std::move(labels)};
}

VolumeLabels rasterize_label(const Phantom& ph, std::uint8_t id, const Lattice& lattice) {
  return label_mask(rasterize_phantom(ph, lattice).second, id);
}

Lattice lattice_around(const Phantom& ph, double spacing_mm, double margin_mm) {
  if (!(spacing_mm > 0.0)) throw Error(ErrorCode::InvalidInput, "spacing must be > 0", "spacing_mm");
  auto box = ph.bounds();
  if (box.isEmpty()) box = Eigen::AlignedBox3d(Point3::Zero(), Point3::Zero());
  const Point3 lo = box.min().array() - margin_mm;
  const Point3 hi = box.max().array() + margin_mm;
  Lattice l;
  // cells tile [lo, hi] so voxel centers never sit on axis-aligned faces
  for (int a = 0; a < 3; ++a) l.dims[a] = std::max(1, static_cast<int>(std::ceil((hi[a] - lo[a]) / spacing_mm)));
  l.spacing_mm = Point3::Constant(spacing_mm);
  l.origin_mm = lo.array() + 0.5 * spacing_mm;
  return l;
}

std::vector<Primitive> vertebra_primitives(const Point3& center, std::uint8_t label, double s) {
  std::vector<Primitive> out;
  auto at = [&](double x, double y, double z) { return Point3(center + s * Point3(x, y, z)); };
  auto half = [&](double x, double y, double z) { return Point3(s * Point3(x, y, z)); };
  constexpr double kCancellous = 350.0;
  constexpr double kCortical = 700.0;
  // body
  out.push_back({Cylinder{at(0, 0, -11), at(0, 0, 11), 16.0 * s}, kCancellous, label});
  // pedicles and lamina enclose a small canal
  out.push_back({Box{at(-9, -20, 0), half(3, 6, 6), Eigen::Matrix3d::Identity()}, kCortical, label});
  out.push_back({Box{at(9, -20, 0), half(3, 6, 6), Eigen::Matrix3d::Identity()}, kCortical, label});
  out.push_back({Box{at(0, -30, 0), half(12, 4, 7), Eigen::Matrix3d::Identity()}, kCortical, label});
  // spinous process, tip pointing caudally
  out.push_back({Box{at(0, -41, -4), half(3, 9, 4), rot_x(25.0)}, kCortical, label});
  // transverse processes
  out.push_back({Cylinder{at(-10, -26, 2), at(-31, -29, 5), 3.5 * s}, kCortical, label});
  out.push_back({Cylinder{at(10, -26, 2), at(31, -29, 5), 3.5 * s}, kCortical, label});
  return out;
}

Point3 lumbar_level_center(int level) {
  static constexpr double kLordosis[] = {0.0, 2.0, 4.0, 4.0, 2.0};
  const int idx = std::clamp(level - 1, 0, 4);
  return {0.0, kLordosis[idx], (3 - level) * 30.0};
}

Phantom lumbar_phantom(int levels, bool with_beads, std::uint64_t bead_seed) {
  static constexpr double kScale[] = {0.92, 0.96, 1.0, 1.02, 1.05};
  Phantom ph;
  for (int level = 1; level <= levels; ++level) {
    auto prims = vertebra_primitives(lumbar_level_center(level), static_cast<std::uint8_t>(level),
                                     kScale[std::clamp(level - 1, 0, 4)]);
    ph.primitives.insert(ph.primitives.end(), prims.begin(), prims.end());
  }
  if (with_beads) {
    std::mt19937_64 rng(bead_seed);
    std::vector<Eigen::AlignedBox3d> obstacles;
    for (auto id : ph.label_ids()) obstacles.push_back(ph.label_bounds(id));
    ph.beads = random_bead_layout(rng, Point3(0.0, -10.0, 0.0), Point3(62.0, 58.0, 85.0), obstacles);
  }
  return ph;
}

std::vector<Bead> random_bead_layout(std::mt19937_64& rng, const Point3& center, const Point3& semi_axes,
                                     const std::vector<Eigen::AlignedBox3d>& obstacles, double min_separation_mm,
                                     double clearance_mm) {
  std::vector<Bead> beads;
  for (int attempt = 0; attempt < 200000 && beads.size() < 14; ++attempt) {
    Point3 unit(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1));
    if (unit.squaredNorm() > 1.0) continue;
    const Point3 x = center + unit.cwiseProduct(semi_axes);
    bool ok = true;
    for (const auto& b : beads) ok = ok && (b.center - x).norm() >= min_separation_mm;
    for (const auto& o : obstacles) {
      const Eigen::AlignedBox3d grown(o.min().array() - clearance_mm, o.max().array() + clearance_mm);
      ok = ok && !grown.contains(x);
    }
    if (!ok) continue;
    const bool reference = beads.size() < 7;
    beads.push_back({x, reference ? 5.0 : 3.0, reference});
  }
  if (beads.size() < 14) throw Error(ErrorCode::InvalidInput, "could not place 14 separated beads");
  return beads;
}

Phantom sphere_phantom(const Point3& center, double radius, std::uint8_t label, double hu) {
  Phantom ph;
  ph.primitives.push_back({Sphere{center, radius}, hu, label});
  return ph;
}

Phantom l_shape_phantom(const Point3& corner, std::uint8_t label, double hu) {
  Phantom ph;
  // long bar along x plus a short upright at its end
  ph.primitives.push_back({Box{corner + Point3(25, 5, 5), Point3(25, 5, 5), Eigen::Matrix3d::Identity()}, hu, label});
  ph.primitives.push_back({Box{corner + Point3(45, 5, 25), Point3(5, 5, 15), Eigen::Matrix3d::Identity()}, hu, label});
  return ph;
}

}  // namespace frk
