#pragma once

#include <frk/error.hpp>
#include <frk/geometry.hpp>

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace frk {

/// Regular 3D sampling lattice. `origin_mm` is the world position of the
/// center of voxel (0,0,0); voxels are stored x-fastest.
struct Lattice {
  Eigen::Vector3i dims = Eigen::Vector3i::Ones();
  Eigen::Vector3d spacing_mm = Eigen::Vector3d::Ones();
  Eigen::Vector3d origin_mm = Eigen::Vector3d::Zero();

  void validate() const;
  std::size_t voxel_count() const {
    return static_cast<std::size_t>(dims.x()) * static_cast<std::size_t>(dims.y()) * static_cast<std::size_t>(dims.z());
  }
  std::size_t index(int i, int j, int k) const {
    return (static_cast<std::size_t>(k) * static_cast<std::size_t>(dims.y()) + static_cast<std::size_t>(j)) *
               static_cast<std::size_t>(dims.x()) +
           static_cast<std::size_t>(i);
  }
  Point3 center_of(int i, int j, int k) const {
    return origin_mm + spacing_mm.cwiseProduct(Eigen::Vector3d(i, j, k));
  }
  /// Continuous voxel coordinate of a world point (voxel centers at integers).
  Point3 to_voxel(const Point3& x) const { return (x - origin_mm).cwiseQuotient(spacing_mm); }
  /// Physical extent covered by the voxels (centers +- half a voxel).
  Eigen::AlignedBox3d bounds() const {
    const Point3 half = 0.5 * spacing_mm;
    return {origin_mm - half, origin_mm + spacing_mm.cwiseProduct((dims.cast<double>().array() - 1.0).matrix()) + half};
  }
  friend bool operator==(const Lattice& a, const Lattice& b) {
    return a.dims == b.dims && a.spacing_mm == b.spacing_mm && a.origin_mm == b.origin_mm;
  }
};

template <typename T>
struct Volume {
  Lattice lattice;
  std::vector<T> data;

  Volume() = default;
  explicit Volume(const Lattice& l, T fill = T{}) : lattice(l), data(l.voxel_count(), fill) { l.validate(); }

  const Eigen::Vector3i& dims() const { return lattice.dims; }
  T& at(int i, int j, int k) { return data[lattice.index(i, j, k)]; }
  const T& at(int i, int j, int k) const { return data[lattice.index(i, j, k)]; }
  std::size_t size() const { return data.size(); }

  friend bool operator==(const Volume&, const Volume&) = default;
};

using VolumeHU = Volume<std::int16_t>;
using VolumeLabels = Volume<std::uint8_t>;
using VolumeF = Volume<float>;

enum class DType { Int16, UInt8 };

/// Writes `<stem>.vjson` (header) and the sibling `<stem>.raw` (little-endian).
void save_volume(const VolumeHU& v, const std::filesystem::path& header_path);
void save_volume(const VolumeLabels& v, const std::filesystem::path& header_path);

/// Bytes of the header JSON exactly as written by save_volume.
std::string volume_header_json(const Lattice& lattice, DType dtype);

/// Raw blob bytes exactly as written by save_volume.
std::string encode_volume_raw(const VolumeHU& v);
std::string encode_volume_raw(const VolumeLabels& v);

DType peek_volume_dtype(const std::filesystem::path& header_path);
DType peek_volume_dtype_bytes(const std::string& header);
VolumeHU load_volume_hu(const std::filesystem::path& header_path);
VolumeLabels load_volume_labels(const std::filesystem::path& header_path);
/// Loads either dtype from in-memory header and raw bytes.
VolumeHU decode_volume_hu(const std::string& header, const std::string& raw);
VolumeLabels decode_volume_labels(const std::string& header, const std::string& raw);

std::filesystem::path raw_path_for(const std::filesystem::path& header_path);

/// Attenuation a = max(HU - threshold, 0).
VolumeF threshold_bone(const VolumeHU& v, double hu_threshold = 0.0);

VolumeLabels label_mask(const VolumeLabels& labels, std::uint8_t id);

/// Bounding box of voxel centers carrying `id`; empty box if absent.
Eigen::AlignedBox3d label_bounds(const VolumeLabels& labels, std::uint8_t id);

/// Sorted distinct nonzero label ids.
std::vector<std::uint8_t> label_ids(const VolumeLabels& labels);

}  // namespace frk
