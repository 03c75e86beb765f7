#include <frk/image.hpp>

#include <array>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace frk {

namespace {

std::string pgm_header(int w, int h, int maxval) {
  return "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n" + std::to_string(maxval) + "\n";
}

}  // namespace

std::string encode_pgm(const Image16& img) {
  std::string out = pgm_header(img.width, img.height, 65535);
  out.reserve(out.size() + 2 * img.size());
  for (auto v : img.data) {
    out.push_back(static_cast<char>(v >> 8));
    out.push_back(static_cast<char>(v & 0xFF));
  }
  return out;
}

std::string encode_pgm(const Image8& img) {
  std::string out = pgm_header(img.width, img.height, 255);
  out.append(reinterpret_cast<const char*>(img.data.data()), img.size());
  return out;
}

void write_pgm(const std::filesystem::path& path, const Image16& img) { write_file(path, encode_pgm(img)); }
void write_pgm(const std::filesystem::path& path, const Image8& img) { write_file(path, encode_pgm(img)); }

Image16 decode_pgm(const std::string& bytes) {
  std::size_t pos = 0;
  auto fail = [](const std::string& what) -> Image16 { throw Error(ErrorCode::Format, "PGM: " + what, "pgm"); };
  auto next_token = [&]() -> std::string {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
    std::string tok;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) tok.push_back(bytes[pos++]);
    return tok;
  };
  if (next_token() != "P5") return fail("magic is not P5");
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(next_token());
    h = std::stoi(next_token());
    maxval = std::stoi(next_token());
  } catch (const std::exception&) {
    return fail("malformed header");
  }
  ++pos;  // single whitespace before raster
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535) return fail("bad dimensions or maxval");
  const std::size_t n = static_cast<std::size_t>(w) * h;
  const std::size_t bpp = maxval > 255 ? 2 : 1;
  if (bytes.size() < pos + n * bpp) return fail("raster truncated");
  Image16 img(w, h);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + pos);
  for (std::size_t i = 0; i < n; ++i)
    img.data[i] = bpp == 2 ? static_cast<std::uint16_t>((p[2 * i] << 8) | p[2 * i + 1]) : p[i];
  return img;
}

Image16 read_pgm(const std::filesystem::path& path) { return decode_pgm(read_file(path)); }

Image8 to_mask8(const Image8& binary) {
  Image8 out(binary.width, binary.height);
  for (std::size_t i = 0; i < binary.size(); ++i) out.data[i] = binary.data[i] ? 255 : 0;
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string() + " for reading", path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot open " + path.string() + " for writing", path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string(), path.string());
}

std::string content_hash(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {
constexpr char kB64[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
}

std::string base64_encode(const std::string& bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const unsigned v = (static_cast<unsigned char>(bytes[i]) << 16) | (static_cast<unsigned char>(bytes[i + 1]) << 8) |
                       static_cast<unsigned char>(bytes[i + 2]);
    out += kB64[(v >> 18) & 63];
    out += kB64[(v >> 12) & 63];
    out += kB64[(v >> 6) & 63];
    out += kB64[v & 63];
  }
  const std::size_t rest = bytes.size() - i;
  if (rest > 0) {
    unsigned v = static_cast<unsigned char>(bytes[i]) << 16;
    if (rest == 2) v |= static_cast<unsigned char>(bytes[i + 1]) << 8;
    out += kB64[(v >> 18) & 63];
    out += kB64[(v >> 12) & 63];
    out += rest == 2 ? kB64[(v >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

std::string base64_decode(const std::string& text) {
  std::array<int, 256> lut;
  lut.fill(-1);
  for (int i = 0; i < 64; ++i) lut[static_cast<unsigned char>(kB64[i])] = i;
  std::string out;
  unsigned acc = 0;
  int bits = 0;
  for (unsigned char c : text) {
    if (c == '=' || std::isspace(c)) continue;
    if (lut[c] < 0) throw Error(ErrorCode::Format, "invalid base64 character", "base64");
    acc = (acc << 6) | static_cast<unsigned>(lut[c]);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<char>((acc >> bits) & 0xFF));
    }
  }
  return out;
}

}  // namespace frk
