#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "ranger/geometry.hpp"
#include "ranger/image.hpp"
#include "ranger/synth.hpp"

namespace ranger {

struct RadarProjection {
  double u = 0, v = 0, d = 0;
};

/// Vehicle-frame point -> image position and expected disparity.
inline RadarProjection project_radar_to_disparity(Vec3 p_imu,
                                                  const StereoCalibration& c) {
  const Vec3 p = imu_to_cam(p_imu, c);
  if (p.z <= 0)
    throw std::invalid_argument("project_radar_to_disparity: point behind camera");
  return {c.cx + c.f * p.x / p.z, c.cy + c.f * p.y / p.z, c.f * c.b / p.z};
}

/// Per-frame disparity-offset voting memory. Bins cover [-K, +K] px at 1/16-px
/// resolution (2K*16+1 bins).
struct VoteState {
  int k_px = 4;          // half-range K
  double lambda = 0.3;   // EMA rate
  double smooth_sigma_px = 1.0;
  std::vector<double> memory;  // EMA of normalized vote vectors
  double smoothed_offset = 0;  // EMA of per-frame argmax offsets

  explicit VoteState(int k = 4, double lam = 0.3, double sigma_px = 1.0)
      : k_px(k), lambda(lam), smooth_sigma_px(sigma_px),
        memory(std::size_t(2 * k) * 16 + 1, 0.0) {
    if (k < 1) throw std::invalid_argument("VoteState: K must be >= 1");
    if (lam <= 0 || lam > 1) throw std::invalid_argument("VoteState: bad lambda");
  }

  int bins() const { return int(memory.size()); }
  double bin_center(int i) const { return i / 16.0 - k_px; }
};

namespace detail {

inline std::vector<double> gaussian_smooth_bins(const std::vector<double>& v,
                                                double sigma_bins) {
  if (sigma_bins <= 0) return v;
  const int radius = std::max(1, int(std::ceil(3 * sigma_bins)));
  std::vector<double> kernel(2 * radius + 1);
  double sum = 0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * (i / sigma_bins) * (i / sigma_bins));
    sum += kernel[i + radius];
  }
  for (auto& k : kernel) k /= sum;
  std::vector<double> out(v.size(), 0.0);
  for (int i = 0; i < int(v.size()); ++i) {
    if (v[i] == 0) continue;
    for (int j = -radius; j <= radius; ++j) {
      const int t = i + j;
      if (t >= 0 && t < int(v.size())) out[t] += v[i] * kernel[j + radius];
    }
  }
  return out;
}

/// Image-space bounding box of the eight corners of the detection's 3-D
/// extent box (axis-aligned in the vehicle frame). Corners behind the camera
/// are skipped; returns false if no corner projects.
inline bool radar_extent_box(const RadarDetection& det, const StereoCalibration& c,
                             int img_w, int img_h, int& x0, int& y0, int& x1,
                             int& y1) {
  double u_min = std::numeric_limits<double>::infinity(), u_max = -u_min;
  double v_min = u_min, v_max = -u_min;
  int n = 0;
  for (int i = 0; i < 8; ++i) {
    const Vec3 corner{det.position.x + (i & 1 ? 0.5 : -0.5) * det.extent.x,
                      det.position.y + (i & 2 ? 0.5 : -0.5) * det.extent.y,
                      det.position.z + (i & 4 ? 0.5 : -0.5) * det.extent.z};
    const Vec3 p = imu_to_cam(corner, c);
    if (p.z <= 0) continue;
    const double u = c.cx + c.f * p.x / p.z;
    const double v = c.cy + c.f * p.y / p.z;
    u_min = std::min(u_min, u);
    u_max = std::max(u_max, u);
    v_min = std::min(v_min, v);
    v_max = std::max(v_max, v);
    ++n;
  }
  if (n == 0) return false;
  x0 = std::max(0, int(std::floor(u_min)));
  x1 = std::min(img_w - 1, int(std::ceil(u_max)));
  y0 = std::max(0, int(std::floor(v_min)));
  y1 = std::min(img_h - 1, int(std::ceil(v_max)));
  return x0 <= x1 && y0 <= y1;
}

}  // namespace detail

/// Radar disparity voting: each detection contributes one vote for the offset
/// (radar disparity minus map disparity) closest to zero inside its projected
/// extent box; the smoothed, normalized histogram feeds an EMA memory whose
/// argmax drives an EMA'd offset, clamped to +-3 px and added to every valid
/// pixel of the map. Frames with no usable vote leave the state untouched.
inline double radar_refine_step(DisparityMap& map,
                                const std::vector<RadarDetection>& radar,
                                VoteState& st, const StereoCalibration& calib) {
  std::vector<double> votes(st.memory.size(), 0.0);
  int n_votes = 0;
  for (const auto& det : radar) {
    const Vec3 p_cam = imu_to_cam(det.position, calib);
    if (p_cam.z <= 0) continue;
    const double d_radar = calib.f * calib.b / p_cam.z;
    int x0, y0, x1, y1;
    if (!detail::radar_extent_box(det, calib, map.width, map.height, x0, y0, x1, y1))
      continue;
    double best = 0;
    bool found = false;
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        if (!map.valid(x, y)) continue;
        const double off = d_radar - map.disparity(x, y);
        if (!found || std::abs(off) < std::abs(best) ||
            (std::abs(off) == std::abs(best) && off < best))
          best = off, found = true;
      }
    if (!found || std::abs(best) > st.k_px) continue;
    const int bin = std::clamp(int(std::lround((best + st.k_px) * 16)), 0,
                               st.bins() - 1);
    votes[bin] += 1.0;  // one vote per detection
    ++n_votes;
  }

  if (n_votes > 0) {
    auto smoothed = detail::gaussian_smooth_bins(votes, st.smooth_sigma_px * 16);
    double l1 = 0;
    for (double v : smoothed) l1 += v;
    if (l1 > 0)
      for (auto& v : smoothed) v /= l1;
    for (int i = 0; i < st.bins(); ++i)
      st.memory[i] = (1 - st.lambda) * st.memory[i] + st.lambda * smoothed[i];
    int best_bin = 0;
    for (int i = 1; i < st.bins(); ++i)
      if (st.memory[i] > st.memory[best_bin]) best_bin = i;
    const double d_star = st.bin_center(best_bin);
    st.smoothed_offset = (1 - st.lambda) * st.smoothed_offset + st.lambda * d_star;
  }

  const double applied = std::clamp(st.smoothed_offset, -3.0, 3.0);
  const int raw_off = int(std::lround(applied * DisparityMap::kSubLevels));
  if (raw_off != 0) {
    for (auto& r : map.raw) {
      if (r == DisparityMap::kInvalid) continue;
      const int v = int(r) + raw_off;
      r = static_cast<std::int16_t>(
          std::clamp(v, int(std::numeric_limits<std::int16_t>::min()) + 1,
                     int(std::numeric_limits<std::int16_t>::max())));
    }
  }
  return applied;
}

}  // namespace ranger
