#pragma once

#include <frk/error.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace frk {

/// Dense row-major 2D image; pixel (u, v) at index v * width + u.
template <typename T>
struct Image {
  int width = 0;
  int height = 0;
  std::vector<T> data;

  Image() = default;
  Image(int w, int h, T fill = T{}) : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {
    if (w < 0 || h < 0) throw Error(ErrorCode::InvalidInput, "negative image size");
  }

  T& operator()(int u, int v) { return data[static_cast<std::size_t>(v) * width + u]; }
  const T& operator()(int u, int v) const { return data[static_cast<std::size_t>(v) * width + u]; }
  bool contains(int u, int v) const { return u >= 0 && v >= 0 && u < width && v < height; }
  std::size_t size() const { return data.size(); }

  friend bool operator==(const Image&, const Image&) = default;
};

using ImageF = Image<float>;
using ImageD = Image<double>;
using Image16 = Image<std::uint16_t>;
using Image8 = Image<std::uint8_t>;

/// Binary PGM (P5). 16-bit samples are written big-endian with maxval 65535.
std::string encode_pgm(const Image16& img);
std::string encode_pgm(const Image8& img);
void write_pgm(const std::filesystem::path& path, const Image16& img);
void write_pgm(const std::filesystem::path& path, const Image8& img);

/// Reads 8- or 16-bit P5; 8-bit data is widened without rescaling.
Image16 decode_pgm(const std::string& bytes);
Image16 read_pgm(const std::filesystem::path& path);

/// Mask encoding: nonzero -> 255.
Image8 to_mask8(const Image8& binary);

template <typename T>
ImageD to_double(const Image<T>& img) {
  ImageD out(img.width, img.height);
  for (std::size_t i = 0; i < img.size(); ++i) out.data[i] = static_cast<double>(img.data[i]);
  return out;
}

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);

/// Stable 64-bit FNV-1a content hash as 16 hex digits.
std::string content_hash(const std::string& bytes);

std::string base64_encode(const std::string& bytes);
std::string base64_decode(const std::string& text);

}  // namespace frk
