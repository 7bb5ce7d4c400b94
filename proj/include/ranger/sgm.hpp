#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "ranger/census.hpp"
#include "ranger/image.hpp"

namespace ranger {

struct SgmParams {
  int num_disparities = 64;  // N_d
  int min_disparity = 0;     // d_min
  int p1 = 8;
  int p2 = 32;
};

inline void validate(const SgmParams& p) {
  if (p.num_disparities < 1)
    throw std::invalid_argument("SgmParams: num_disparities must be >= 1");
  // P1 = P2 = 0 is admitted: it degenerates to per-pixel winner-take-all,
  // which the equivalence tests rely on.
  if (p.p1 < 0 || p.p2 < p.p1)
    throw std::invalid_argument("SgmParams: need 0 <= P1 <= P2");
}

namespace detail {

// Census Hamming cost; disparities whose right-image column leaves the frame
// cost more than any real match (max Hamming is 26) so they never win against
// an evaluable candidate, and pixels with no evaluable candidate go invalid.
constexpr int kSgmNoData = 27;

inline std::vector<std::uint8_t> sgm_cost_volume(const CensusImage& cl,
                                                 const CensusImage& cr,
                                                 const SgmParams& p) {
  const int w = cl.width, h = cl.height, nd = p.num_disparities;
  std::vector<std::uint8_t> cost(std::size_t(w) * h * nd, kSgmNoData);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      std::uint8_t* c = cost.data() + (std::size_t(y) * w + x) * nd;
      for (int i = 0; i < nd; ++i) {
        const int rx = x - (p.min_disparity + i);
        if (rx < 0 || rx >= w) continue;
        c[i] = static_cast<std::uint8_t>(hamming_cost(cl.code(x, y), cr.code(rx, y)));
      }
    }
  }
  return cost;
}

/// One directional pass; (sx, sy) is the step from predecessor to pixel, so
/// the predecessor of p is p - (sx, sy). Adds L_r into acc.
inline void sgm_direction_pass(const std::vector<std::uint8_t>& cost, int w, int h,
                               int nd, int p1, int p2, int sx, int sy,
                               std::vector<std::int32_t>& acc) {
  const int big = std::numeric_limits<std::int32_t>::max() / 4;
  std::vector<std::int32_t> prev_row(std::size_t(w) * nd, 0);
  std::vector<std::int32_t> cur_row(std::size_t(w) * nd, 0);
  std::vector<std::int32_t> prev_min_row(w, 0);
  std::vector<std::int32_t> cur_min_row(w, 0);

  const int y0 = sy >= 0 ? 0 : h - 1;
  const int y_step = sy >= 0 ? 1 : -1;
  for (int yy = 0; yy < h; ++yy) {
    const int y = y0 + yy * y_step;
    const int x0 = sx >= 0 ? 0 : w - 1;
    const int x_step = sx >= 0 ? 1 : -1;
    for (int xx = 0; xx < w; ++xx) {
      const int x = x0 + xx * x_step;
      const int px = x - sx, py = y - sy;
      const std::uint8_t* c = cost.data() + (std::size_t(y) * w + x) * nd;
      std::int32_t* l = cur_row.data() + std::size_t(x) * nd;
      const bool has_pred = px >= 0 && px < w && py >= 0 && py < h;
      std::int32_t mn = big;
      if (!has_pred) {
        for (int d = 0; d < nd; ++d) {
          l[d] = c[d];
          mn = std::min(mn, l[d]);
        }
      } else {
        const std::int32_t* lp =
            (sy == 0 ? cur_row.data() : prev_row.data()) + std::size_t(px) * nd;
        const std::int32_t pmin = sy == 0 ? cur_min_row[px] : prev_min_row[px];
        for (int d = 0; d < nd; ++d) {
          std::int32_t best = lp[d];
          if (d > 0) best = std::min(best, lp[d - 1] + p1);
          if (d + 1 < nd) best = std::min(best, lp[d + 1] + p1);
          best = std::min(best, pmin + p2);
          l[d] = c[d] + best - pmin;
          mn = std::min(mn, l[d]);
        }
      }
      cur_min_row[x] = mn;
      std::int32_t* a = acc.data() + (std::size_t(y) * w + x) * nd;
      for (int d = 0; d < nd; ++d) a[d] += l[d];
    }
    std::swap(prev_row, cur_row);
    std::swap(prev_min_row, cur_min_row);
  }
}

}  // namespace detail

/// Census-cost semi-global matching with four directional passes (left-to-
/// right, top-down, and the two top-down diagonals), winner-take-all over the
/// aggregated costs, and parabolic sub-pixel refinement.
inline DisparityMap sgm_disparity(const GrayImage& left, const GrayImage& right,
                                  const SgmParams& p, int workers = 1) {
  validate(p);
  if (left.width != right.width || left.height != right.height)
    throw std::invalid_argument("sgm_disparity: image dims differ");
  const int w = left.width, h = left.height, nd = p.num_disparities;

  const CensusImage cl = census_transform(left, workers);
  const CensusImage cr = census_transform(right, workers);
  const auto cost = detail::sgm_cost_volume(cl, cr, p);

  std::vector<std::int32_t> acc(std::size_t(w) * h * nd, 0);
  const int dirs[4][2] = {{1, 0}, {0, 1}, {1, 1}, {-1, 1}};
  for (const auto& d : dirs)
    detail::sgm_direction_pass(cost, w, h, nd, p.p1, p.p2, d[0], d[1], acc);

  DisparityMap out(w, h);
  const int d_lo = p.min_disparity;
  parallel_for(static_cast<std::size_t>(h), workers, [&](std::size_t yy) {
    const int y = int(yy);
    for (int x = 0; x < w; ++x) {
      const std::int32_t* a = acc.data() + (std::size_t(y) * w + x) * nd;
      int best_i = -1;
      std::int32_t best = std::numeric_limits<std::int32_t>::max();
      for (int i = 0; i < nd; ++i) {
        const int rx = x - (d_lo + i);
        if (rx < 0 || rx >= w) continue;  // winner must be evaluable
        if (a[i] < best) {
          best = a[i];
          best_i = i;
        }
      }
      if (best_i < 0) continue;
      double d_hat = d_lo + best_i;
      if (best_i > 0 && best_i + 1 < nd && x - (d_lo + best_i + 1) >= 0)
        d_hat += subpixel_refine(double(a[best_i - 1]), double(best),
                                 double(a[best_i + 1]));
      long raw = std::lround(d_hat * DisparityMap::kSubLevels);
      raw = std::clamp(raw, long(d_lo) * DisparityMap::kSubLevels,
                       long(d_lo + nd) * DisparityMap::kSubLevels - 1);
      out.raw_at(x, y) = static_cast<std::int16_t>(raw);
    }
  });
  return out;
}

}  // namespace ranger
