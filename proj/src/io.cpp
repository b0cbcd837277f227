#include "ctlab/io.hpp"

#include <zlib.h>

#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace ctlab {

namespace {

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  out.push_back(v & 0xff);
  out.push_back((v >> 8) & 0xff);
  out.push_back((v >> 16) & 0xff);
  out.push_back((v >> 24) & 0xff);
}

void put_u64(std::vector<unsigned char>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back((v >> (8 * i)) & 0xff);
}

void put_f32(std::vector<unsigned char>& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

std::uint32_t get_u32(const unsigned char* p) {
  return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 |
         std::uint32_t(p[3]) << 24;
}

std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

float get_f32(const unsigned char* p) {
  const std::uint32_t bits = get_u32(p);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

void write_bytes(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("write failed: " + path.string());
}

std::vector<unsigned char> read_bytes(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) throw std::runtime_error("cannot open: " + path.string());
  const auto size = f.tellg();
  f.seekg(0);
  std::vector<unsigned char> bytes(static_cast<std::size_t>(size));
  f.read(reinterpret_cast<char*>(bytes.data()), size);
  if (!f) throw std::runtime_error("read failed: " + path.string());
  return bytes;
}

}  // namespace

void write_image(const std::filesystem::path& path, const ImageGrid& img) {
  std::vector<unsigned char> out;
  out.reserve(16 + 4u * img.values.size());
  const char magic[6] = {'C', 'T', 'I', 'M', 'G', '1'};
  out.insert(out.end(), magic, magic + 6);
  out.push_back(0);
  out.push_back(0);
  put_u32(out, static_cast<std::uint32_t>(img.side_pixels));
  put_f32(out, static_cast<float>(img.pixel_size_mm));
  for (Eigen::Index i = 0; i < img.values.size(); ++i)
    put_f32(out, static_cast<float>(img.values.data()[i]));
  write_bytes(path, out);
}

ImageGrid read_image(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  if (bytes.size() < 16 || std::memcmp(bytes.data(), "CTIMG1", 6) != 0)
    throw std::runtime_error("not a CTIMG1 file: " + path.string());
  const auto side = get_u32(bytes.data() + 8);
  const float pixel = get_f32(bytes.data() + 12);
  const std::size_t count = std::size_t(side) * side;
  if (bytes.size() != 16 + 4 * count)
    throw std::runtime_error("truncated CTIMG1 file: " + path.string());
  ImageGrid img(static_cast<int>(side), pixel);
  for (std::size_t i = 0; i < count; ++i)
    img.values.data()[i] = get_f32(bytes.data() + 16 + 4 * i);
  return img;
}

void write_sinogram(const std::filesystem::path& path, const Sinogram& s) {
  std::vector<unsigned char> out;
  out.reserve(24 + 4u * s.values.size());
  const char magic[6] = {'C', 'T', 'S', 'I', 'N', '1'};
  out.insert(out.end(), magic, magic + 6);
  out.push_back(0);
  out.push_back(0);
  put_u32(out, static_cast<std::uint32_t>(s.n_views));
  put_u32(out, static_cast<std::uint32_t>(s.n_channels));
  put_u64(out, s.geometry_fingerprint);
  for (Eigen::Index i = 0; i < s.values.size(); ++i)
    put_f32(out, static_cast<float>(s.values.data()[i]));
  write_bytes(path, out);
}

Sinogram read_sinogram(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  if (bytes.size() < 24 || std::memcmp(bytes.data(), "CTSIN1", 6) != 0)
    throw std::runtime_error("not a CTSIN1 file: " + path.string());
  Sinogram s;
  s.n_views = static_cast<int>(get_u32(bytes.data() + 8));
  s.n_channels = static_cast<int>(get_u32(bytes.data() + 12));
  s.geometry_fingerprint = get_u64(bytes.data() + 16);
  const std::size_t count = std::size_t(s.n_views) * s.n_channels;
  if (bytes.size() != 24 + 4 * count)
    throw std::runtime_error("truncated CTSIN1 file: " + path.string());
  s.values.resize(s.n_views, s.n_channels);
  for (std::size_t i = 0; i < count; ++i)
    s.values.data()[i] = get_f32(bytes.data() + 24 + 4 * i);
  return s;
}

void write_png_gray(const std::filesystem::path& path, const ImageGrid& img) {
  const int n = img.side_pixels;
  const double lo = img.values.minCoeff();
  const double hi = img.values.maxCoeff();
  const double scale = hi > lo ? 255.0 / (hi - lo) : 0.0;

  // One filter byte (0 = none) per scanline; image row 0 is the bottom, PNG
  // scanlines run top to bottom.
  std::vector<unsigned char> raw;
  raw.reserve(std::size_t(n) * (n + 1));
  for (int r = n - 1; r >= 0; --r) {
    raw.push_back(0);
    for (int c = 0; c < n; ++c) {
      const double v = (img.values(r, c) - lo) * scale;
      raw.push_back(static_cast<unsigned char>(std::max(0.0, std::min(255.0, v)) + 0.5));
    }
  }

  uLongf comp_cap = compressBound(static_cast<uLong>(raw.size()));
  std::vector<unsigned char> comp(comp_cap);
  if (compress2(comp.data(), &comp_cap, raw.data(), static_cast<uLong>(raw.size()), 9) != Z_OK)
    throw std::runtime_error("png: deflate failed");
  comp.resize(comp_cap);

  std::vector<unsigned char> out;
  const unsigned char sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  out.insert(out.end(), sig, sig + 8);

  auto chunk = [&out](const char type[4], const std::vector<unsigned char>& data) {
    const std::uint32_t len = static_cast<std::uint32_t>(data.size());
    for (int i = 3; i >= 0; --i) out.push_back((len >> (8 * i)) & 0xff);
    const std::size_t crc_start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), data.begin(), data.end());
    const auto crc =
        crc32(0, out.data() + crc_start, static_cast<uInt>(out.size() - crc_start));
    for (int i = 3; i >= 0; --i) out.push_back((crc >> (8 * i)) & 0xff);
  };

  std::vector<unsigned char> ihdr;
  for (int i = 3; i >= 0; --i) ihdr.push_back((std::uint32_t(n) >> (8 * i)) & 0xff);
  for (int i = 3; i >= 0; --i) ihdr.push_back((std::uint32_t(n) >> (8 * i)) & 0xff);
  ihdr.push_back(8);  // bit depth
  ihdr.push_back(0);  // grayscale
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);
  chunk("IHDR", ihdr);
  chunk("IDAT", comp);
  chunk("IEND", {});
  write_bytes(path, out);
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

}  // namespace ctlab
