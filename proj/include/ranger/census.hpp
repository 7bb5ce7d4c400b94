#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ranger/image.hpp"

namespace ranger {

/// Per-pixel 26-bit Census descriptors (25 comparisons + leading sentinel
/// bit 25). A descriptor of 0 means the 5x5 window left the source image.
struct CensusImage {
  static constexpr int kSpan = 2;  // (S_x, S_y) = (2, 2)
  static constexpr std::uint32_t kSentinel = 1u << 25;

  int width = 0;
  int height = 0;
  std::vector<std::uint32_t> codes;
  double scale_x = 1.0;  // census dims / source dims
  double scale_y = 1.0;

  CensusImage() = default;
  CensusImage(int w, int h)
      : width(w), height(h), codes(static_cast<std::size_t>(w) * h, 0) {}

  std::uint32_t code(int x, int y) const {
    return codes[static_cast<std::size_t>(y) * width + x];
  }
  bool inside(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }
};

/// Census code for source-pixel center (sx, sy). Comparison bits are packed
/// row-major, window row -2 first, MSB = first comparison after the sentinel.
inline std::uint32_t census_code_at(const GrayImage& img, int sx, int sy) {
  if (sx < 2 || sy < 2 || sx >= img.width - 2 || sy >= img.height - 2) return 0;
  const std::uint8_t c = img.at(sx, sy);
  std::uint32_t code = 1;  // sentinel
  for (int j = -2; j <= 2; ++j) {
    const std::uint8_t* r = img.row(sy + j) + sx;
    code = (code << 1) | std::uint32_t(r[-2] > c);
    code = (code << 1) | std::uint32_t(r[-1] > c);
    code = (code << 1) | std::uint32_t(r[0] > c);
    code = (code << 1) | std::uint32_t(r[1] > c);
    code = (code << 1) | std::uint32_t(r[2] > c);
  }
  return code;
}

namespace detail {
inline std::vector<int> scaled_coords(int out, int src) {
  std::vector<int> m(out);
  for (int i = 0; i < out; ++i)
    m[i] = (out == src) ? i : int(std::lround(i * double(src) / double(out)));
  return m;
}
}  // namespace detail

/// Census transform, optionally at reduced output dims: output pixel (x, y)
/// samples the source at round(x * src/out) with a full-resolution 5x5 window.
inline CensusImage census_transform(const GrayImage& img, int out_w, int out_h,
                                    int workers = 1) {
  if (out_w > img.width || out_h > img.height)
    throw std::invalid_argument("census_transform: output dims exceed source");
  if (out_w < 1 || out_h < 1)
    throw std::invalid_argument("census_transform: empty output");
  CensusImage out(out_w, out_h);
  out.scale_x = double(out_w) / img.width;
  out.scale_y = double(out_h) / img.height;
  const auto mx = detail::scaled_coords(out_w, img.width);
  const auto my = detail::scaled_coords(out_h, img.height);
  parallel_for(static_cast<std::size_t>(out_h), workers, [&](std::size_t y) {
    std::uint32_t* dst = out.codes.data() + y * out_w;
    const int sy = my[y];
    for (int x = 0; x < out_w; ++x) dst[x] = census_code_at(img, mx[x], sy);
  });
  return out;
}

inline CensusImage census_transform(const GrayImage& img, int workers = 1) {
  return census_transform(img, img.width, img.height, workers);
}

/// Rectangle in census (output) coordinates, half-open on the right/bottom.
struct CensusRoi {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
};

/// Census restricted to a set of rectangles; codes outside stay 0 and the
/// computed region is bit-identical to the full transform. Keeps the matcher
/// from paying for Census over pixels no query can reach.
inline CensusImage census_transform_rois(const GrayImage& img, int out_w, int out_h,
                                         const std::vector<CensusRoi>& rois,
                                         int workers = 1) {
  if (out_w > img.width || out_h > img.height)
    throw std::invalid_argument("census_transform_rois: output dims exceed source");
  CensusImage out(out_w, out_h);
  out.scale_x = double(out_w) / img.width;
  out.scale_y = double(out_h) / img.height;
  const auto mx = detail::scaled_coords(out_w, img.width);
  const auto my = detail::scaled_coords(out_h, img.height);

  // merged x-intervals per row
  std::vector<std::vector<std::pair<int, int>>> rows(out_h);
  for (const auto& r : rois) {
    const int x0 = std::max(0, r.x0), x1 = std::min(out_w, r.x1);
    const int y0 = std::max(0, r.y0), y1 = std::min(out_h, r.y1);
    if (x0 >= x1) continue;
    for (int y = y0; y < y1; ++y) rows[y].emplace_back(x0, x1);
  }
  for (auto& iv : rows) {
    std::sort(iv.begin(), iv.end());
    std::size_t k = 0;
    for (std::size_t i = 0; i < iv.size(); ++i) {
      if (k > 0 && iv[i].first <= iv[k - 1].second)
        iv[k - 1].second = std::max(iv[k - 1].second, iv[i].second);
      else
        iv[k++] = iv[i];
    }
    iv.resize(k);
  }

  parallel_for(static_cast<std::size_t>(out_h), workers, [&](std::size_t y) {
    std::uint32_t* dst = out.codes.data() + y * out_w;
    const int sy = my[y];
    for (const auto& [x0, x1] : rows[y])
      for (int x = x0; x < x1; ++x) dst[x] = census_code_at(img, mx[x], sy);
  });
  return out;
}

/// Hamming matching cost between two descriptors.
inline int hamming_cost(std::uint32_t a, std::uint32_t b) { return std::popcount(a ^ b); }

enum class ObjectKind { kFar, kClose };

/// A batch of query points in the left census frame with its search ranges.
struct QueryBlock {
  std::vector<std::pair<int, int>> points;
  int dx_min = 0, dx_max = 0;
  int dy_min = 0, dy_max = 0;
  int owner = -1;  // detection index
  ObjectKind kind = ObjectKind::kFar;
};

struct MatchResult {
  int dx_int = 0;
  int dy_int = 0;
  double dx_subpix = 0.0;
  double cost = 0.0;        // mean Hamming over contributing points
  double cost_minus = -1.0; // neighbor cost at dx*-1, -1 when absent
  double cost_plus = -1.0;
  int valid_points = 0;
  bool verified = false;
};

/// Parabolic sub-pixel correction from the three costs around the minimum.
/// Returns 0 when the parabola is degenerate (denominator <= 0).
inline double subpixel_refine(double cost_minus, double cost_at, double cost_plus) {
  const double denom = cost_minus + cost_plus - 2.0 * cost_at;
  if (denom <= 0.0) return 0.0;
  return -(cost_plus - cost_minus) / (2.0 * denom);
}

/// Exhaustive search over the block's (dx, dy) range. The right census is
/// sampled at (x - dx, y + dy) so dx is the (positive) disparity. Point pairs
/// with an undefined descriptor on either side drop out and the cost is the
/// mean over contributing points. Ties break toward smaller |dx|, then
/// smaller dy. Returns nullopt when no offset has a contributing point.
inline std::optional<MatchResult> block_match(const QueryBlock& block,
                                              const CensusImage& left,
                                              const CensusImage& right) {
  if (block.points.empty()) return std::nullopt;
  if (block.dx_min > block.dx_max || block.dy_min > block.dy_max)
    throw std::invalid_argument("block_match: empty search range");

  const int ndx = block.dx_max - block.dx_min + 1;
  const int ndy = block.dy_max - block.dy_min + 1;
  std::vector<double> mean_cost(static_cast<std::size_t>(ndx) * ndy,
                                std::numeric_limits<double>::infinity());
  std::vector<int> contrib(static_cast<std::size_t>(ndx) * ndy, 0);

  std::vector<std::uint32_t> lcodes;
  std::vector<std::pair<int, int>> pts;
  lcodes.reserve(block.points.size());
  pts.reserve(block.points.size());
  for (const auto& [x, y] : block.points) {
    if (!left.inside(x, y)) continue;
    const std::uint32_t c = left.code(x, y);
    if (c == 0) continue;
    lcodes.push_back(c);
    pts.emplace_back(x, y);
  }

  for (int iy = 0; iy < ndy; ++iy) {
    const int dy = block.dy_min + iy;
    for (int ix = 0; ix < ndx; ++ix) {
      const int dx = block.dx_min + ix;
      long sum = 0;
      int n = 0;
      for (std::size_t k = 0; k < pts.size(); ++k) {
        const int rx = pts[k].first - dx;
        const int ry = pts[k].second + dy;
        if (!right.inside(rx, ry)) continue;
        const std::uint32_t rc = right.code(rx, ry);
        if (rc == 0) continue;
        sum += std::popcount(lcodes[k] ^ rc);
        ++n;
      }
      if (n > 0) {
        mean_cost[std::size_t(iy) * ndx + ix] = double(sum) / n;
        contrib[std::size_t(iy) * ndx + ix] = n;
      }
    }
  }

  int best_ix = -1, best_iy = -1;
  double best = std::numeric_limits<double>::infinity();
  for (int iy = 0; iy < ndy; ++iy) {
    const int dy = block.dy_min + iy;
    for (int ix = 0; ix < ndx; ++ix) {
      const int dx = block.dx_min + ix;
      const double c = mean_cost[std::size_t(iy) * ndx + ix];
      if (c == std::numeric_limits<double>::infinity()) continue;
      bool better = false;
      if (c < best) {
        better = true;
      } else if (c == best && best_ix >= 0) {
        const int bdx = block.dx_min + best_ix;
        const int bdy = block.dy_min + best_iy;
        if (std::abs(dx) < std::abs(bdx))
          better = true;
        else if (std::abs(dx) == std::abs(bdx) && dy < bdy)
          better = true;
        else if (std::abs(dx) == std::abs(bdx) && dy == bdy && dx < bdx)
          better = true;
      }
      if (better) {
        best = c;
        best_ix = ix;
        best_iy = iy;
      }
    }
  }
  if (best_ix < 0) return std::nullopt;

  MatchResult r;
  r.dx_int = block.dx_min + best_ix;
  r.dy_int = block.dy_min + best_iy;
  r.cost = best;
  r.valid_points = contrib[std::size_t(best_iy) * ndx + best_ix];
  r.dx_subpix = double(r.dx_int);
  if (best_ix > 0 && best_ix + 1 < ndx) {
    const double cm = mean_cost[std::size_t(best_iy) * ndx + best_ix - 1];
    const double cp = mean_cost[std::size_t(best_iy) * ndx + best_ix + 1];
    if (cm != std::numeric_limits<double>::infinity() &&
        cp != std::numeric_limits<double>::infinity()) {
      r.cost_minus = cm;
      r.cost_plus = cp;
      r.dx_subpix = r.dx_int + subpixel_refine(cm, best, cp);
    }
  }
  return r;
}

/// Forward match then right-to-left verification: the backward pass queries
/// the right image at the matched positions and searches the left image over
/// the negated dx range with dy pinned to -dy_f. Accepted iff |dx_v| < tau_v
/// (strict), with dx_v taken from the sub-pixel disparities: at a true
/// half-pixel shift the two integer winners legitimately straddle the optimum
/// and an integer comparison would reject a correct match. An unverified
/// result keeps its disparity but is flagged.
inline std::optional<MatchResult> forward_backward_match(const QueryBlock& block,
                                                         const CensusImage& left,
                                                         const CensusImage& right,
                                                         double tau_v) {
  auto fwd = block_match(block, left, right);
  if (!fwd) return std::nullopt;

  QueryBlock back;
  back.points.reserve(block.points.size());
  for (const auto& [x, y] : block.points)
    back.points.emplace_back(x - fwd->dx_int, y + fwd->dy_int);
  back.dx_min = -block.dx_max;
  back.dx_max = -block.dx_min;
  back.dy_min = -fwd->dy_int;
  back.dy_max = -fwd->dy_int;

  fwd->verified = false;
  if (auto bwd = block_match(back, right, left)) {
    const double dx_v = fwd->dx_subpix + bwd->dx_subpix;
    fwd->verified = std::abs(dx_v) < tau_v;
  }
  return fwd;
}

/// Batched forward-backward matching; results are written by block index so
/// the output is independent of the worker count.
inline std::vector<std::optional<MatchResult>> batch_match(
    const std::vector<QueryBlock>& blocks, const CensusImage& left,
    const CensusImage& right, double tau_v, int workers = 1) {
  std::vector<std::optional<MatchResult>> out(blocks.size());
  parallel_for(blocks.size(), workers, [&](std::size_t i) {
    out[i] = forward_backward_match(blocks[i], left, right, tau_v);
  });
  return out;
}

/// Debug dump: 8-byte width/height header then raw 32-bit codes.
inline void dump_census(const CensusImage& img, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("dump_census: cannot open " + path);
  const std::uint32_t wh[2] = {std::uint32_t(img.width), std::uint32_t(img.height)};
  f.write(reinterpret_cast<const char*>(wh), 8);
  f.write(reinterpret_cast<const char*>(img.codes.data()),
          std::streamsize(img.codes.size() * 4));
}

}  // namespace ranger
