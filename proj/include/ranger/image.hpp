#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <thread>
#include <vector>

namespace ranger {

/// 8-bit single-channel image, row-major.
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  GrayImage() = default;
  GrayImage(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {
    if (w < 1 || h < 1) throw std::invalid_argument("GrayImage: dims must be >= 1");
  }

  std::uint8_t at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
  const std::uint8_t* row(int y) const { return data.data() + static_cast<std::size_t>(y) * width; }
  std::uint8_t* row(int y) { return data.data() + static_cast<std::size_t>(y) * width; }
  bool inside(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }
};

/// Interleaved 3-channel 8-bit image.
struct RgbImage {
  int width = 0;
  int height = 0;
  int channels = 3;
  std::vector<std::uint8_t> data;

  RgbImage() = default;
  RgbImage(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, 0) {}
  const std::uint8_t* pixel(int x, int y) const {
    return data.data() + (static_cast<std::size_t>(y) * width + x) * channels;
  }
  std::uint8_t* pixel(int x, int y) {
    return data.data() + (static_cast<std::size_t>(y) * width + x) * channels;
  }
};

/// Dense disparity in signed 16-bit fixed point, 16 sub-levels per pixel.
/// The most-negative raw value marks an invalid pixel.
struct DisparityMap {
  static constexpr int kSubLevels = 16;
  static constexpr std::int16_t kInvalid = std::numeric_limits<std::int16_t>::min();

  int width = 0;
  int height = 0;
  std::vector<std::int16_t> raw;

  DisparityMap() = default;
  DisparityMap(int w, int h)
      : width(w), height(h), raw(static_cast<std::size_t>(w) * h, kInvalid) {}

  std::int16_t raw_at(int x, int y) const { return raw[static_cast<std::size_t>(y) * width + x]; }
  std::int16_t& raw_at(int x, int y) { return raw[static_cast<std::size_t>(y) * width + x]; }
  bool valid(int x, int y) const { return raw_at(x, y) != kInvalid; }
  double disparity(int x, int y) const { return raw_at(x, y) / double(kSubLevels); }

  void set(int x, int y, double d) {
    raw_at(x, y) = static_cast<std::int16_t>(std::lround(d * kSubLevels));
  }
  void set_invalid(int x, int y) { raw_at(x, y) = kInvalid; }
};

inline GrayImage crop(const GrayImage& img, int x0, int y0, int w, int h) {
  if (x0 < 0 || y0 < 0 || w < 1 || h < 1 || x0 + w > img.width || y0 + h > img.height)
    throw std::invalid_argument("crop: rectangle leaves the image");
  GrayImage out(w, h);
  for (int y = 0; y < h; ++y)
    std::copy(img.row(y0 + y) + x0, img.row(y0 + y) + x0 + w, out.row(y));
  return out;
}

/// BT.601 luma, rounded to nearest.
inline GrayImage to_gray(const RgbImage& rgb) {
  if (rgb.channels != 3) throw std::invalid_argument("to_gray: expected 3 channels");
  GrayImage out(rgb.width, rgb.height);
  const std::uint8_t* src = rgb.data.data();
  for (std::size_t i = 0, n = static_cast<std::size_t>(rgb.width) * rgb.height; i < n; ++i) {
    const double luma = 0.299 * src[3 * i] + 0.587 * src[3 * i + 1] + 0.114 * src[3 * i + 2];
    long v = std::lround(luma);
    out.data[i] = static_cast<std::uint8_t>(v < 0 ? 0 : (v > 255 ? 255 : v));
  }
  return out;
}

/// Block-mean downscale by an integer factor. Output dims are floor(in/s).
inline GrayImage downscale(const GrayImage& img, int s) {
  if (s < 1) throw std::invalid_argument("downscale: factor must be >= 1");
  if (s == 1) return img;
  const int ow = img.width / s;
  const int oh = img.height / s;
  if (ow < 1 || oh < 1) throw std::invalid_argument("downscale: output would be empty");
  GrayImage out(ow, oh);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      int sum = 0;
      for (int j = 0; j < s; ++j) {
        const std::uint8_t* r = img.row(y * s + j) + x * s;
        for (int i = 0; i < s; ++i) sum += r[i];
      }
      out.at(x, y) = static_cast<std::uint8_t>(std::lround(sum / double(s * s)));
    }
  }
  return out;
}

/// Nearest-neighbor upscale of a disparity map computed at reduced scale.
/// Valid raw values are multiplied by s (d_full = s * d_down); the invalid
/// sentinel propagates. Values that overflow 16 bits or fall below
/// d_min*16*s after the multiply are re-masked invalid.
inline DisparityMap upscale_disparity(const DisparityMap& map, int s, int d_min = 0) {
  if (s < 1) throw std::invalid_argument("upscale_disparity: factor must be >= 1");
  if (s == 1) return map;
  DisparityMap out(map.width * s, map.height * s);
  const int lo = d_min * DisparityMap::kSubLevels * s;
  for (int y = 0; y < map.height; ++y) {
    for (int x = 0; x < map.width; ++x) {
      const std::int16_t r = map.raw_at(x, y);
      std::int16_t v = DisparityMap::kInvalid;
      if (r != DisparityMap::kInvalid) {
        const int scaled = int(r) * s;
        if (scaled >= lo && scaled <= std::numeric_limits<std::int16_t>::max())
          v = static_cast<std::int16_t>(scaled);
      }
      for (int j = 0; j < s; ++j)
        for (int i = 0; i < s; ++i) out.raw_at(x * s + i, y * s + j) = v;
    }
  }
  return out;
}

/// Shift image content down by dy pixels (negative dy shifts up), replicating
/// edge rows. Used by the rectification offset search and the scene generator.
inline GrayImage shift_vertical(const GrayImage& img, int dy) {
  if (dy == 0) return img;
  GrayImage out(img.width, img.height);
  for (int y = 0; y < img.height; ++y) {
    int sy = y - dy;
    sy = sy < 0 ? 0 : (sy >= img.height ? img.height - 1 : sy);
    std::copy(img.row(sy), img.row(sy) + img.width, out.row(y));
  }
  return out;
}

/// Run fn(i) for i in [0, n), split over at most `workers` threads in
/// contiguous chunks. Deterministic for disjoint index-addressed writes.
template <typename Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn) {
  if (n == 0) return;
  if (workers <= 1 || n == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const std::size_t k = std::min<std::size_t>(workers, n);
  std::vector<std::thread> pool;
  pool.reserve(k);
  const std::size_t chunk = (n + k - 1) / k;
  for (std::size_t w = 0; w < k; ++w) {
    const std::size_t lo = w * chunk;
    const std::size_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn] {
      for (std::size_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace ranger
