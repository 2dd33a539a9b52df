#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace svl {

// Grayscale raster, values in [0,1], row-major.
struct Raster {
  int h = 0;
  int w = 0;
  std::vector<float> v;

  Raster() = default;
  Raster(int height, int width) : h(height), w(width), v(size_t(height) * width, 0.0f) {}

  float& at(int y, int x) { return v[size_t(y) * w + x]; }
  float at(int y, int x) const { return v[size_t(y) * w + x]; }

  bool operator==(const Raster& o) const { return h == o.h && w == o.w && v == o.v; }
};

inline std::vector<uint8_t> raster_to_bytes(const Raster& r) {
  std::vector<uint8_t> out(r.v.size());
  for (size_t i = 0; i < r.v.size(); ++i) {
    const float c = std::clamp(r.v[i], 0.0f, 1.0f);
    out[i] = uint8_t(std::lround(c * 255.0f));
  }
  return out;
}

// Binary PGM (P5), 8-bit, maxval 255.
inline void write_pgm(const std::filesystem::path& path, const Raster& r) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path.string());
  f << "P5\n" << r.w << " " << r.h << "\n255\n";
  const auto bytes = raster_to_bytes(r);
  f.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!f) throw std::runtime_error("write failed: " + path.string());
}

namespace detail {
inline int next_pgm_token(std::istream& in) {
  // Skips whitespace and '#' comments, returns the next integer.
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (std::isspace(c)) {
      c = in.get();
    } else {
      break;
    }
  }
  if (c == EOF) throw std::runtime_error("truncated PGM header");
  int value = 0;
  bool any = false;
  while (c != EOF && std::isdigit(c)) {
    value = value * 10 + (c - '0');
    any = true;
    c = in.get();
  }
  if (!any) throw std::runtime_error("malformed PGM header token");
  return value;
}
}  // namespace detail

inline Raster read_pgm(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open: " + path.string());
  char m0 = 0, m1 = 0;
  f.get(m0);
  f.get(m1);
  if (m0 != 'P' || m1 != '5') throw std::runtime_error("not a binary PGM (P5): " + path.string());
  const int w = detail::next_pgm_token(f);
  const int h = detail::next_pgm_token(f);
  const int maxval = detail::next_pgm_token(f);
  if (maxval != 255) throw std::runtime_error("unsupported PGM maxval (want 255): " + path.string());
  Raster r(h, w);
  std::vector<uint8_t> bytes(size_t(h) * w);
  f.read(reinterpret_cast<char*>(bytes.data()), std::streamsize(bytes.size()));
  if (f.gcount() != std::streamsize(bytes.size()))
    throw std::runtime_error("truncated PGM payload: " + path.string());
  for (size_t i = 0; i < bytes.size(); ++i) r.v[i] = float(bytes[i]) / 255.0f;
  return r;
}

}  // namespace svl
