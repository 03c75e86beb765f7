#include <frk/image.hpp>
#include <frk/volume.hpp>

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <set>

namespace frk {

using nlohmann::json;

void Lattice::validate() const {
  if ((dims.array() < 1).any()) throw Error(ErrorCode::InvalidInput, "all dims must be >= 1", "dims");
  if (!spacing_mm.allFinite() || (spacing_mm.array() <= 0.0).any())
    throw Error(ErrorCode::InvalidInput, "all spacings must be finite and > 0", "spacing_mm");
  if (!origin_mm.allFinite()) throw Error(ErrorCode::InvalidInput, "origin must be finite", "origin_mm");
}

std::filesystem::path raw_path_for(const std::filesystem::path& header_path) {
  auto p = header_path;
  p.replace_extension(".raw");
  return p;
}

namespace {

const char* dtype_name(DType d) { return d == DType::Int16 ? "int16" : "uint8"; }

json vec_json(const Eigen::Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }

struct Header {
  Lattice lattice;
  DType dtype;
};

Header parse_header(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Format, std::string("volume header is not valid JSON: ") + e.what(), "header");
  }
  auto vec3 = [&](const char* key) -> Eigen::Vector3d {
    if (!j.contains(key) || !j[key].is_array() || j[key].size() != 3)
      throw Error(ErrorCode::Format, std::string("volume header field '") + key + "' must be a 3-array", key);
    Eigen::Vector3d v;
    for (int i = 0; i < 3; ++i) {
      if (!j[key][i].is_number()) throw Error(ErrorCode::Format, std::string("non-numeric ") + key, key);
      v[i] = j[key][i].get<double>();
    }
    if (!v.allFinite()) throw Error(ErrorCode::Format, std::string("non-finite ") + key, key);
    return v;
  };
  Header h;
  if (!j.contains("dims") || !j["dims"].is_array() || j["dims"].size() != 3)
    throw Error(ErrorCode::Format, "volume header field 'dims' must be a 3-array", "dims");
  for (int i = 0; i < 3; ++i) {
    if (!j["dims"][i].is_number_integer() || j["dims"][i].get<long long>() < 1)
      throw Error(ErrorCode::Format, "dims must be positive integers", "dims");
    h.lattice.dims[i] = j["dims"][i].get<int>();
  }
  h.lattice.spacing_mm = vec3("spacing_mm");
  if ((h.lattice.spacing_mm.array() <= 0.0).any())
    throw Error(ErrorCode::Format, "spacing_mm must be > 0", "spacing_mm");
  h.lattice.origin_mm = vec3("origin_mm");
  const std::string dtype = j.value("dtype", "");
  if (dtype == "int16") h.dtype = DType::Int16;
  else if (dtype == "uint8") h.dtype = DType::UInt8;
  else throw Error(ErrorCode::Format, "unknown dtype '" + dtype + "'", "dtype");
  if (j.value("order", "x-fastest") != "x-fastest")
    throw Error(ErrorCode::Format, "unsupported voxel order", "order");
  return h;
}

template <typename T>
std::string encode_raw(const std::vector<T>& data) {
  std::string raw(data.size() * sizeof(T), '\0');
  if constexpr (sizeof(T) == 1) {
    std::memcpy(raw.data(), data.data(), data.size());
  } else {
    for (std::size_t i = 0; i < data.size(); ++i) {
      const auto u = static_cast<std::uint16_t>(data[i]);
      raw[2 * i] = static_cast<char>(u & 0xFF);
      raw[2 * i + 1] = static_cast<char>(u >> 8);
    }
  }
  return raw;
}

template <typename T>
Volume<T> decode(const std::string& header, const std::string& raw, DType expected) {
  Header h = parse_header(header);
  if (h.dtype != expected)
    throw Error(ErrorCode::Format, std::string("expected dtype ") + dtype_name(expected) + " but header has " +
                                       dtype_name(h.dtype), "dtype");
  Volume<T> v(h.lattice);
  if (raw.size() != v.size() * sizeof(T))
    throw Error(ErrorCode::Format,
                "raw length " + std::to_string(raw.size()) + " does not match dims (expected " +
                    std::to_string(v.size() * sizeof(T)) + " bytes)",
                "raw length");
  const auto* p = reinterpret_cast<const unsigned char*>(raw.data());
  if constexpr (sizeof(T) == 1) {
    std::memcpy(v.data.data(), p, raw.size());
  } else {
    for (std::size_t i = 0; i < v.size(); ++i)
      v.data[i] = static_cast<T>(static_cast<std::uint16_t>(p[2 * i] | (p[2 * i + 1] << 8)));
  }
  return v;
}

template <typename T>
void save(const Volume<T>& v, const std::filesystem::path& header_path, DType dtype) {
  v.lattice.validate();
  if (v.data.size() != v.lattice.voxel_count())
    throw Error(ErrorCode::Format, "data length does not match dims", "raw length");
  write_file(header_path, volume_header_json(v.lattice, dtype));
  write_file(raw_path_for(header_path), encode_raw(v.data));
}

}  // namespace

std::string volume_header_json(const Lattice& lattice, DType dtype) {
  json j;
  j["dims"] = json::array({lattice.dims.x(), lattice.dims.y(), lattice.dims.z()});
  j["spacing_mm"] = vec_json(lattice.spacing_mm);
  j["origin_mm"] = vec_json(lattice.origin_mm);
  j["dtype"] = dtype_name(dtype);
  j["order"] = "x-fastest";
  return j.dump(2) + "\n";
}

std::string encode_volume_raw(const VolumeHU& v) { return encode_raw(v.data); }
std::string encode_volume_raw(const VolumeLabels& v) { return encode_raw(v.data); }

DType peek_volume_dtype_bytes(const std::string& header) { return parse_header(header).dtype; }

void save_volume(const VolumeHU& v, const std::filesystem::path& header_path) { save(v, header_path, DType::Int16); }
void save_volume(const VolumeLabels& v, const std::filesystem::path& header_path) {
  save(v, header_path, DType::UInt8);
}

DType peek_volume_dtype(const std::filesystem::path& header_path) { return parse_header(read_file(header_path)).dtype; }

VolumeHU decode_volume_hu(const std::string& header, const std::string& raw) {
  return decode<std::int16_t>(header, raw, DType::Int16);
}
VolumeLabels decode_volume_labels(const std::string& header, const std::string& raw) {
  return decode<std::uint8_t>(header, raw, DType::UInt8);
}

VolumeHU load_volume_hu(const std::filesystem::path& header_path) {
  return decode_volume_hu(read_file(header_path), read_file(raw_path_for(header_path)));
}
VolumeLabels load_volume_labels(const std::filesystem::path& header_path) {
  return decode_volume_labels(read_file(header_path), read_file(raw_path_for(header_path)));
}

VolumeF threshold_bone(const VolumeHU& v, double hu_threshold) {
  VolumeF out(v.lattice);
  for (std::size_t i = 0; i < v.size(); ++i)
    out.data[i] = static_cast<float>(std::max(static_cast<double>(v.data[i]) - hu_threshold, 0.0));
  return out;
}

VolumeLabels label_mask(const VolumeLabels& labels, std::uint8_t id) {
  VolumeLabels out(labels.lattice);
  std::transform(labels.data.begin(), labels.data.end(), out.data.begin(),
                 [id](std::uint8_t l) { return static_cast<std::uint8_t>(l == id ? 1 : 0); });
  return out;
}

Eigen::AlignedBox3d label_bounds(const VolumeLabels& labels, std::uint8_t id) {
  Eigen::AlignedBox3d box;
  const auto& d = labels.dims();
  for (int k = 0; k < d.z(); ++k)
    for (int j = 0; j < d.y(); ++j)
      for (int i = 0; i < d.x(); ++i)
        if (labels.at(i, j, k) == id) box.extend(labels.lattice.center_of(i, j, k));
  return box;
}

std::vector<std::uint8_t> label_ids(const VolumeLabels& labels) {
  std::set<std::uint8_t> ids(labels.data.begin(), labels.data.end());
  ids.erase(0);
  return {ids.begin(), ids.end()};
}

}  // namespace frk
