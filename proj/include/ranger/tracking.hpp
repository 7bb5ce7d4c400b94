#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "ranger/assignment.hpp"
#include "ranger/detection.hpp"
#include "ranger/geometry.hpp"

namespace ranger {

enum class SpeedStatus { kReliable, kUnreliable };

struct Tracklet {
  int id = 0;
  std::array<double, 4> x{};   // [x_rel, y_rel, v_x, v_y]
  std::array<double, 16> P{};  // row-major 4x4
  Detection last_box;
  double box_x_rel = 0;  // forward distance when last_box was stored
  std::vector<double> feature;  // unit norm when set
  double geometry_estimate = 0;  // e.g. metric width, via IRLS
  std::vector<double> geometry_weights;
  std::vector<double> geometry_measurements;
  int age = 0;
  int hits = 0;
  int misses = 0;
  bool confirmed = false;
  SpeedStatus speed_status = SpeedStatus::kUnreliable;
  double speed = 0;  // absolute object speed, m/s
  DepthSource depth_source = DepthSource::kStereo;
  std::vector<std::pair<double, double>> history_stereo;  // (t, x_rel)
  std::vector<std::pair<double, double>> history_mono;
};

struct EgoState {
  double speed = 0;     // m/s
  double yaw_rate = 0;  // rad/s
};

struct AssocConfig {
  double gate_px = 100;  // max predicted-center displacement
  double gate_m = 15;    // max longitudinal separation
  double iou_weight = 1;
  double cos_weight = 1;
};

/// Detection-side observation for association.
struct DetObservation {
  Detection det;
  std::vector<double> feature;
  double x_rel = std::numeric_limits<double>::quiet_NaN();  // forward dist, m
};

inline double iou(const Detection& a, const Detection& b) {
  const double ax0 = a.cx - a.w / 2, ax1 = a.cx + a.w / 2;
  const double ay0 = a.cy - a.h / 2, ay1 = a.cy + a.h / 2;
  const double bx0 = b.cx - b.w / 2, bx1 = b.cx + b.w / 2;
  const double by0 = b.cy - b.h / 2, by1 = b.cy + b.h / 2;
  const double ow = std::min(ax1, bx1) - std::max(ax0, bx0);
  const double oh = std::min(ay1, by1) - std::max(ay0, by0);
  if (ow <= 0 || oh <= 0) return 0;
  const double inter = ow * oh;
  return inter / (a.w * a.h + b.w * b.h - inter);
}

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.empty() || b.empty() || a.size() != b.size()) return 0;
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0 || bb == 0) return 0;
  return ab / std::sqrt(aa * bb);
}

/// Track's box carried to the current frame: center re-projected from the
/// predicted state (lateral from y_rel, which maps to the image column for a
/// forward camera), size rescaled by the range ratio. Without calibration the
/// stored box is used as-is.
inline Detection predicted_box(const Tracklet& t, const StereoCalibration* calib,
                               int img_w, int /*img_h*/) {
  Detection box = t.last_box;
  if (!calib || t.x[0] <= 0 || t.box_x_rel <= 0) return box;
  const double u = calib->cx - calib->f * t.x[1] / t.x[0];
  box.cx = u / img_w;
  const double scale = t.box_x_rel / t.x[0];
  box.w = std::min(1.0, t.last_box.w * scale);
  box.h = std::min(1.0, t.last_box.h * scale);
  return box;
}

/// IoU + feature cosine, gated: zero box overlap, a large predicted-center
/// displacement, or a large longitudinal gap reject the pair (nullopt).
inline std::optional<double> association_cost(const DetObservation& obs,
                                              const Tracklet& track, int img_w,
                                              int img_h, const AssocConfig& cfg,
                                              const StereoCalibration* calib =
                                                  nullptr) {
  const Detection pred = predicted_box(track, calib, img_w, img_h);
  const double overlap = iou(obs.det, pred);
  if (overlap == 0) return std::nullopt;
  const double du = (obs.det.cx - pred.cx) * img_w;
  const double dv = (obs.det.cy - pred.cy) * img_h;
  if (std::sqrt(du * du + dv * dv) > cfg.gate_px) return std::nullopt;
  if (!std::isnan(obs.x_rel) && std::abs(obs.x_rel - track.x[0]) > cfg.gate_m)
    return std::nullopt;
  return cfg.iou_weight * overlap + cfg.cos_weight * cosine(obs.feature, track.feature);
}

struct AssociationResult {
  std::vector<std::pair<int, int>> matches;  // (det index, track index)
  std::vector<int> unmatched_dets;
  std::vector<int> unmatched_tracks;
};

/// Optimal 1-to-1 matching maximizing the total score over non-rejected
/// pairs: min-cost assignment on negated scores with dummy rows/columns so
/// every entity may stay unmatched.
inline AssociationResult associate(const std::vector<DetObservation>& dets,
                                   const std::vector<Tracklet>& tracks, int img_w,
                                   int img_h, const AssocConfig& cfg,
                                   const StereoCalibration* calib = nullptr) {
  const int n = int(dets.size()), m = int(tracks.size());
  AssociationResult out;
  if (n == 0 || m == 0) {
    for (int i = 0; i < n; ++i) out.unmatched_dets.push_back(i);
    for (int j = 0; j < m; ++j) out.unmatched_tracks.push_back(j);
    return out;
  }
  constexpr double kForbidden = 1e9;
  const int dim = n + m;
  std::vector<std::vector<double>> cost(dim, std::vector<double>(dim, 0.0));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) {
      const auto s = association_cost(dets[i], tracks[j], img_w, img_h, cfg, calib);
      cost[i][j] = s ? -*s : kForbidden;
    }
  const auto asg = min_cost_assignment(cost);
  std::vector<bool> det_matched(n, false), trk_matched(m, false);
  for (int i = 0; i < n; ++i) {
    const int j = asg[i];
    if (j < m && cost[i][j] < kForbidden / 2) {
      out.matches.emplace_back(i, j);
      det_matched[i] = true;
      trk_matched[j] = true;
    }
  }
  for (int i = 0; i < n; ++i)
    if (!det_matched[i]) out.unmatched_dets.push_back(i);
  for (int j = 0; j < m; ++j)
    if (!trk_matched[j]) out.unmatched_tracks.push_back(j);
  return out;
}

namespace detail {

inline std::array<double, 16> mat4_mul(const std::array<double, 16>& a,
                                       const std::array<double, 16>& b) {
  std::array<double, 16> r{};
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      double s = 0;
      for (int k = 0; k < 4; ++k) s += a[i * 4 + k] * b[k * 4 + j];
      r[i * 4 + j] = s;
    }
  return r;
}

inline std::array<double, 16> mat4_transpose(const std::array<double, 16>& a) {
  std::array<double, 16> r{};
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) r[i * 4 + j] = a[j * 4 + i];
  return r;
}

/// Cholesky factorization; returns false when the matrix is not positive
/// definite (doubles as the innovation-covariance sanity check).
inline bool cholesky(std::vector<double>& a, int n) {
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) {
      double s = a[i * n + j];
      for (int k = 0; k < j; ++k) s -= a[i * n + k] * a[j * n + k];
      if (i == j) {
        if (s <= 0) return false;
        a[i * n + i] = std::sqrt(s);
      } else {
        a[i * n + j] = s / a[j * n + j];
      }
    }
  }
  return true;
}

/// Solves S x = b given the Cholesky factor of S (lower triangle in place).
inline void cholesky_solve(const std::vector<double>& l, int n,
                           std::vector<double>& b) {
  for (int i = 0; i < n; ++i) {
    double s = b[i];
    for (int k = 0; k < i; ++k) s -= l[i * n + k] * b[k];
    b[i] = s / l[i * n + i];
  }
  for (int i = n - 1; i >= 0; --i) {
    double s = b[i];
    for (int k = i + 1; k < n; ++k) s -= l[k * n + i] * b[k];
    b[i] = s / l[i * n + i];
  }
}

}  // namespace detail

/// Constant-relative-velocity prediction with ego-yaw compensation: the state
/// translates by its velocity, then positions and velocities rotate by
/// -yaw_rate*dt about the ego origin. Process noise follows the white-
/// acceleration model scaled by sigma_a.
inline void kf_predict(Tracklet& t, double dt, const EgoState& ego,
                       double sigma_a = 1.0) {
  if (dt < 0) throw std::invalid_argument("kf_predict: dt must be >= 0");
  const double alpha = ego.yaw_rate * dt;
  const double c = std::cos(alpha), s = std::sin(alpha);
  // F = blockdiag(G, G) * CV; G = [[c, s], [-s, c]] rotates by -alpha
  const std::array<double, 16> cv{1, 0, dt, 0,  //
                                  0, 1, 0, dt,  //
                                  0, 0, 1, 0,   //
                                  0, 0, 0, 1};
  const std::array<double, 16> rot{c, s, 0, 0,   //
                                   -s, c, 0, 0,  //
                                   0, 0, c, s,   //
                                   0, 0, -s, c};
  const std::array<double, 16> f = detail::mat4_mul(rot, cv);
  std::array<double, 4> nx{};
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) nx[i] += f[i * 4 + j] * t.x[j];
  t.x = nx;

  const double q2 = sigma_a * sigma_a;
  const double dt2 = dt * dt, dt3 = dt2 * dt, dt4 = dt2 * dt2;
  const std::array<double, 16> q{q2 * dt4 / 4, 0, q2 * dt3 / 2, 0,  //
                                 0, q2 * dt4 / 4, 0, q2 * dt3 / 2,  //
                                 q2 * dt3 / 2, 0, q2 * dt2, 0,      //
                                 0, q2 * dt3 / 2, 0, q2 * dt2};
  auto p = detail::mat4_mul(detail::mat4_mul(f, t.P), detail::mat4_transpose(f));
  for (int i = 0; i < 16; ++i) p[i] += q[i];
  // keep P symmetric against drift
  for (int i = 0; i < 4; ++i)
    for (int j = i + 1; j < 4; ++j) {
      const double v = (p[i * 4 + j] + p[j * 4 + i]) / 2;
      p[i * 4 + j] = p[j * 4 + i] = v;
    }
  t.P = p;
}

/// Linear update with H = identity (position + velocity measurement) or the
/// 2x4 position selector. R is row-major with the measurement's dimension.
inline void kf_update(Tracklet& t, const std::vector<double>& z, bool with_speed,
                      const std::vector<double>& r_meas) {
  const int m = with_speed ? 4 : 2;
  if (int(z.size()) != m || int(r_meas.size()) != m * m)
    throw std::invalid_argument("kf_update: measurement dims mismatch");

  // S = H P H' + R reduces to the top-left block for the position selector
  std::vector<double> s(m * m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) s[i * m + j] = t.P[i * 4 + j] + r_meas[i * m + j];
  std::vector<double> l = s;
  if (!detail::cholesky(l, m))
    throw std::runtime_error("kf_update: innovation covariance not positive definite");

  // innovation
  std::vector<double> y(m);
  for (int i = 0; i < m; ++i) y[i] = z[i] - t.x[i];

  // K = P H' S^-1 computed column-wise: solve S k_row = (P H')_row
  // P H' is the first m columns of P (4 x m)
  std::array<double, 16> k{};  // 4 x m (stored in 4x4, extra cols zero)
  for (int i = 0; i < 4; ++i) {
    std::vector<double> row(m);
    for (int j = 0; j < m; ++j) row[j] = t.P[i * 4 + j];
    detail::cholesky_solve(l, m, row);  // S is symmetric: K = (P H') S^-1
    for (int j = 0; j < m; ++j) k[i * 4 + j] = row[j];
  }

  for (int i = 0; i < 4; ++i) {
    double dx = 0;
    for (int j = 0; j < m; ++j) dx += k[i * 4 + j] * y[j];
    t.x[i] += dx;
  }

  // P = (I - K H) P; K H is 4x4 with only the first m columns of H active
  std::array<double, 16> kh{};
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < m; ++j) kh[i * 4 + j] = k[i * 4 + j];
  std::array<double, 16> ikh{};
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) ikh[i * 4 + j] = (i == j ? 1.0 : 0.0) - kh[i * 4 + j];
  auto p = detail::mat4_mul(ikh, t.P);
  for (int i = 0; i < 4; ++i)
    for (int j = i + 1; j < 4; ++j) {
      const double v = (p[i * 4 + j] + p[j * 4 + i]) / 2;
      p[i * 4 + j] = p[j * 4 + i] = v;
    }
  t.P = p;
}

struct IrlsResult {
  double value = 0;
  std::vector<double> weights;
};

/// Huber-weighted location estimate, initialized at the median and re-solved
/// until the update falls under 1e-6 or the iteration cap.
inline IrlsResult irls_estimate(const std::vector<double>& meas, int iterations,
                                double delta) {
  if (meas.empty()) throw std::invalid_argument("irls_estimate: no measurements");
  if (delta <= 0) throw std::invalid_argument("irls_estimate: delta must be positive");
  std::vector<double> sorted = meas;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  double m = n % 2 ? sorted[n / 2] : (sorted[n / 2 - 1] + sorted[n / 2]) / 2;

  IrlsResult out;
  out.weights.assign(n, 1.0);
  for (int it = 0; it < iterations; ++it) {
    double sw = 0, swx = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double r = std::abs(meas[i] - m);
      out.weights[i] = r <= delta ? 1.0 : delta / r;
      sw += out.weights[i];
      swx += out.weights[i] * meas[i];
    }
    const double next = swx / sw;
    const bool done = std::abs(next - m) < 1e-6;
    m = next;
    if (done) break;
  }
  out.value = m;
  return out;
}

/// Object speed over the window endpoints, ego-compensated. Reliability needs
/// the stereo- and mono-derived range series to agree pointwise within the
/// given relative ratio.
inline std::pair<double, SpeedStatus> estimate_speed(
    const std::vector<std::pair<double, double>>& stereo_series,
    const std::vector<std::pair<double, double>>& mono_series, double v_ego,
    double agree_ratio = 0.3) {
  if (stereo_series.size() < 2)
    throw std::invalid_argument("estimate_speed: need at least two points");
  const double dt = stereo_series.back().first - stereo_series.front().first;
  if (dt == 0) throw std::invalid_argument("estimate_speed: zero time span");
  const double v_obj =
      v_ego + (stereo_series.back().second - stereo_series.front().second) / dt;

  SpeedStatus status = SpeedStatus::kUnreliable;
  if (mono_series.size() == stereo_series.size() && !mono_series.empty()) {
    bool ok = true;
    for (std::size_t i = 0; i < mono_series.size(); ++i) {
      const double s = stereo_series[i].second, q = mono_series[i].second;
      if (std::abs(s - q) > agree_ratio * std::max(std::abs(s), 1e-9)) {
        ok = false;
        break;
      }
    }
    if (ok) status = SpeedStatus::kReliable;
  }
  return {v_obj, status};
}

struct DepthCandidates {
  std::optional<DepthEstimate> stereo;
  std::optional<DepthEstimate> gpt;
  std::optional<DepthEstimate> size;
};

/// Priority fusion: stereo when present and consistent with the best mono cue
/// (no mono present = no check), else ground-point, else size.
inline DepthEstimate fuse_depth(const DepthCandidates& c, double sanity_ratio) {
  const std::optional<DepthEstimate>& mono = c.gpt ? c.gpt : c.size;
  if (c.stereo) {
    if (!mono) return *c.stereo;
    const double zm = mono->z_cam;
    if (zm > 0 && std::abs(c.stereo->z_cam - zm) / zm <= sanity_ratio)
      return *c.stereo;
  }
  if (c.gpt) return *c.gpt;
  if (c.size) return *c.size;
  throw std::invalid_argument("fuse_depth: no candidates");
}

}  // namespace ranger
