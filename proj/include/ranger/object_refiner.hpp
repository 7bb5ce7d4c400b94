#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <tuple>
#include <vector>

#include "ranger/geometry.hpp"
#include "ranger/radar_refiner.hpp"

namespace ranger {

struct ObjRefinerState {
  double prev_offset = 0;  // px
  double beta = 0.1;       // consistency bonus
  double r_max = 5;        // association range, m
  double w_p = 1;          // prior weight in the refinement mean
  double tau = 0.5;        // inlier band, px
  double rate_limit = 0.5; // px per frame
};

/// A stereo-ranged object as seen in image space.
struct StereoObservation {
  double u = 0, v = 0, d = 0;  // px, px, px
};

struct CoarseResult {
  double offset = 0;  // best candidate
  double score = 0;
  // (stereo disparity, radar-implied disparity) for the pairs formed at the
  // best candidate, feeding the iterative stage
  std::vector<std::pair<double, double>> pairs;
};

/// Default candidate grid: 1/4-px steps over +-2 px.
inline std::vector<double> default_offset_candidates(double half_range = 2.0,
                                                     double step = 0.25) {
  std::vector<double> c;
  const int n = int(std::lround(half_range / step));
  for (int i = -n; i <= n; ++i) c.push_back(i * step);
  return c;
}

/// Stage 1: for each candidate offset, reproject every stereo observation
/// with the shifted disparity, greedily 1-to-1 pair against the radar points
/// by ascending 3-D distance within R_max, and score the pairing; the
/// previous frame's offset earns a consistency bonus. Ties prefer the
/// smaller-magnitude, then more-negative candidate.
inline CoarseResult object_refiner_coarse(const std::vector<StereoObservation>& stereo,
                                          const std::vector<Vec3>& radar_pts,
                                          const std::vector<double>& candidates,
                                          const ObjRefinerState& st,
                                          const StereoCalibration& calib) {
  if (candidates.empty())
    throw std::invalid_argument("object_refiner_coarse: no candidates");

  CoarseResult best;
  bool first = true;
  for (const double cand : candidates) {
    std::vector<Vec3> pts(stereo.size());
    std::vector<bool> usable(stereo.size(), false);
    for (std::size_t i = 0; i < stereo.size(); ++i) {
      const double d = stereo[i].d + cand;
      if (d <= 0) continue;
      pts[i] = cam_to_imu(reproject(stereo[i].u, stereo[i].v, d, calib), calib);
      usable[i] = true;
    }
    // all candidate pairs within range, ascending distance (greedy 1-to-1)
    std::vector<std::tuple<double, int, int>> edges;
    for (std::size_t i = 0; i < stereo.size(); ++i) {
      if (!usable[i]) continue;
      for (std::size_t j = 0; j < radar_pts.size(); ++j) {
        const double dist = norm(pts[i] - radar_pts[j]);
        if (dist < st.r_max) edges.emplace_back(dist, int(i), int(j));
      }
    }
    std::sort(edges.begin(), edges.end());
    std::vector<bool> s_used(stereo.size(), false), r_used(radar_pts.size(), false);
    double score = 0;
    std::vector<std::pair<double, double>> pairs;
    for (const auto& [dist, i, j] : edges) {
      if (s_used[i] || r_used[j]) continue;
      s_used[i] = r_used[j] = true;
      score += std::max(1.0 - dist / st.r_max, 0.0);
      pairs.emplace_back(stereo[i].d,
                         project_radar_to_disparity(radar_pts[j], calib).d);
    }
    if (cand == st.prev_offset) score += st.beta;

    bool better = first || score > best.score;
    if (!first && score == best.score) {
      if (std::abs(cand) < std::abs(best.offset))
        better = true;
      else if (std::abs(cand) == std::abs(best.offset) && cand < best.offset)
        better = true;
    }
    if (better) {
      best.offset = cand;
      best.score = score;
      best.pairs = std::move(pairs);
      first = false;
    }
  }
  return best;
}

/// Stage 2: prior-weighted mean of the per-pair disparity differences that
/// fall inside the inlier band around the coarse offset, then the rate limit
/// against the previous applied offset. Updates and returns the applied
/// offset.
inline double object_refiner_iterate(
    const std::vector<std::pair<double, double>>& pairs, double coarse_offset,
    ObjRefinerState& st) {
  double sum = 0;
  int n = 0;
  for (const auto& [d_stereo, d_radar] : pairs) {
    const double diff = d_radar - d_stereo;
    if (std::abs(diff - coarse_offset) < st.tau) {
      sum += diff;
      ++n;
    }
  }
  double refined;
  if (n == 0 && st.w_p == 0) {
    refined = st.prev_offset;  // nothing to learn from
  } else {
    refined = (sum + st.w_p * st.prev_offset) / (n + st.w_p);
  }
  const double step = std::clamp(refined - st.prev_offset, -st.rate_limit,
                                 st.rate_limit);
  st.prev_offset += step;
  return st.prev_offset;
}

}  // namespace ranger
