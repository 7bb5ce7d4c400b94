#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "ranger/census.hpp"
#include "ranger/image.hpp"

namespace ranger {

struct BmParams {
  int num_disparities = 64;   // N_d
  int block_size = 9;         // odd window side w
  int min_disparity = 0;      // d_min
  double texture_threshold = 10;  // sum of |horizontal diffs| over the window
  double uniqueness_ratio = 10;   // percent
  int downscale = 1;          // s
};

inline void validate(const BmParams& p) {
  if (p.block_size < 3 || p.block_size % 2 == 0)
    throw std::invalid_argument("BmParams: block_size must be odd and >= 3");
  if (p.num_disparities < 1)
    throw std::invalid_argument("BmParams: num_disparities must be >= 1");
  if (p.uniqueness_ratio < 0)
    throw std::invalid_argument("BmParams: uniqueness_ratio must be >= 0");
  if (p.downscale < 1) throw std::invalid_argument("BmParams: downscale must be >= 1");
}

namespace detail {

/// Full-resolution SAD block matcher; the downscale wrapper lives below.
inline DisparityMap bm_disparity_at_scale(const GrayImage& left,
                                          const GrayImage& right, const BmParams& p,
                                          int workers) {
  const int hw = p.block_size / 2;
  const int d_lo = p.min_disparity;
  const int d_hi = p.min_disparity + p.num_disparities;  // exclusive
  DisparityMap out(left.width, left.height);

  parallel_for(static_cast<std::size_t>(left.height), workers, [&](std::size_t yy) {
    const int y = int(yy);
    if (y < hw || y >= left.height - hw) return;
    std::vector<long> sad(p.num_disparities);
    for (int x = hw; x < left.width - hw; ++x) {
      // texture gate: sum of |horizontal adjacent differences| in the window
      long grad = 0;
      for (int j = -hw; j <= hw; ++j) {
        const std::uint8_t* r = left.row(y + j) + x;
        for (int i = -hw; i < hw; ++i) grad += std::abs(int(r[i + 1]) - int(r[i]));
      }
      if (grad < p.texture_threshold) continue;

      int n_eval = 0;
      for (int d = d_lo; d < d_hi; ++d) {
        const int idx = d - d_lo;
        if (x - d - hw < 0 || x - d + hw >= right.width) {
          sad[idx] = -1;  // not evaluable
          continue;
        }
        long s = 0;
        for (int j = -hw; j <= hw; ++j) {
          const std::uint8_t* lr = left.row(y + j) + x;
          const std::uint8_t* rr = right.row(y + j) + x - d;
          for (int i = -hw; i <= hw; ++i) s += std::abs(int(lr[i]) - int(rr[i]));
        }
        sad[idx] = s;
        ++n_eval;
      }
      if (n_eval == 0) continue;

      int best_idx = -1;
      long best = std::numeric_limits<long>::max();
      for (int i = 0; i < p.num_disparities; ++i)
        if (sad[i] >= 0 && sad[i] < best) {
          best = sad[i];
          best_idx = i;
        }

      // uniqueness: second best among disparities further than 1 from the best
      long second = std::numeric_limits<long>::max();
      for (int i = 0; i < p.num_disparities; ++i) {
        if (sad[i] < 0 || std::abs(i - best_idx) <= 1) continue;
        second = std::min(second, sad[i]);
      }
      if (second != std::numeric_limits<long>::max() &&
          double(best) * (1.0 + p.uniqueness_ratio / 100.0) >= double(second))
        continue;

      double d_hat = d_lo + best_idx;
      if (best_idx > 0 && best_idx + 1 < p.num_disparities && sad[best_idx - 1] >= 0 &&
          sad[best_idx + 1] >= 0)
        d_hat += subpixel_refine(double(sad[best_idx - 1]), double(best),
                                 double(sad[best_idx + 1]));
      long raw = std::lround(d_hat * DisparityMap::kSubLevels);
      raw = std::clamp(raw, long(d_lo) * DisparityMap::kSubLevels,
                       long(d_hi) * DisparityMap::kSubLevels - 1);
      out.raw_at(x, y) = static_cast<std::int16_t>(raw);
    }
  });
  return out;
}

}  // namespace detail

/// Dense SAD block matching. With downscale s > 1 the pair is matched at
/// reduced resolution over a proportionally reduced range and the map is
/// rescaled back (d_full = s * d_down).
inline DisparityMap bm_disparity(const GrayImage& left, const GrayImage& right,
                                 const BmParams& p, int workers = 1) {
  validate(p);
  if (left.width != right.width || left.height != right.height)
    throw std::invalid_argument("bm_disparity: image dims differ");
  const int s = p.downscale;
  if (s == 1) return detail::bm_disparity_at_scale(left, right, p, workers);

  BmParams q = p;
  q.downscale = 1;
  q.min_disparity = (p.min_disparity + s - 1) / s;  // ceil keeps d_full >= d_min
  q.num_disparities =
      std::max(1, (p.min_disparity + p.num_disparities) / s - q.min_disparity);
  const DisparityMap down = detail::bm_disparity_at_scale(
      downscale(left, s), downscale(right, s), q, workers);
  const DisparityMap up = upscale_disparity(down, s, q.min_disparity);

  if (up.width == left.width && up.height == left.height) return up;
  DisparityMap out(left.width, left.height);  // pad the truncated border
  for (int y = 0; y < up.height; ++y)
    for (int x = 0; x < up.width; ++x) out.raw_at(x, y) = up.raw_at(x, y);
  return out;
}

}  // namespace ranger
