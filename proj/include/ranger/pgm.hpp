#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "ranger/image.hpp"

namespace ranger {

namespace detail {
inline int next_pnm_token(std::istream& in) {
  // skips whitespace and '#' comments
  for (;;) {
    int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      break;
    }
  }
  int v = -1;
  in >> v;
  if (!in) throw std::runtime_error("pgm: malformed header");
  return v;
}
}  // namespace detail

inline void save_pgm(const GrayImage& img, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("pgm: cannot open " + path);
  f << "P5\n" << img.width << " " << img.height << "\n255\n";
  f.write(reinterpret_cast<const char*>(img.data.data()), std::streamsize(img.data.size()));
}

inline GrayImage load_pgm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("pgm: cannot open " + path);
  std::string magic;
  f >> magic;
  if (magic != "P5") throw std::runtime_error("pgm: expected P5 in " + path);
  const int w = detail::next_pnm_token(f);
  const int h = detail::next_pnm_token(f);
  const int maxval = detail::next_pnm_token(f);
  if (maxval != 255) throw std::runtime_error("pgm: expected maxval 255 in " + path);
  f.get();  // single whitespace before raster
  GrayImage img(w, h);
  f.read(reinterpret_cast<char*>(img.data.data()), std::streamsize(img.data.size()));
  if (!f) throw std::runtime_error("pgm: truncated raster in " + path);
  return img;
}

/// Disparity debug dump: 16-bit P5 (big-endian, maxval 65535), raw values
/// offset-encoded by +32768 so the invalid sentinel lands on 0.
inline void save_disparity_pgm(const DisparityMap& map, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("pgm: cannot open " + path);
  f << "P5\n" << map.width << " " << map.height << "\n65535\n";
  for (std::int16_t r : map.raw) {
    const std::uint16_t enc = static_cast<std::uint16_t>(int(r) + 32768);
    const char bytes[2] = {char(enc >> 8), char(enc & 0xff)};
    f.write(bytes, 2);
  }
}

inline DisparityMap load_disparity_pgm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("pgm: cannot open " + path);
  std::string magic;
  f >> magic;
  if (magic != "P5") throw std::runtime_error("pgm: expected P5 in " + path);
  const int w = detail::next_pnm_token(f);
  const int h = detail::next_pnm_token(f);
  const int maxval = detail::next_pnm_token(f);
  if (maxval != 65535) throw std::runtime_error("pgm: expected maxval 65535 in " + path);
  f.get();
  DisparityMap map(w, h);
  for (auto& r : map.raw) {
    char b[2];
    f.read(b, 2);
    const std::uint16_t enc = (std::uint16_t(std::uint8_t(b[0])) << 8) | std::uint8_t(b[1]);
    r = static_cast<std::int16_t>(int(enc) - 32768);
  }
  if (!f) throw std::runtime_error("pgm: truncated raster in " + path);
  return map;
}

}  // namespace ranger
