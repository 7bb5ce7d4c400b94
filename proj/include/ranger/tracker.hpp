#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "ranger/tracking.hpp"

namespace ranger {

struct TrackerConfig {
  AssocConfig assoc;
  double sigma_a = 1.0;
  int confirm_hits = 3;
  int max_misses = 5;
  double fuse_sanity_ratio = 0.5;
  double speed_agree_ratio = 0.3;
  int speed_window = 5;  // history length used for speed
  int irls_iterations = 20;
  double irls_delta = 0.5;
  double init_pos_var = 4.0;
  double init_vel_var = 25.0;
  double min_meas_var = 0.01;  // variance floor for the position update
  int max_geometry_meas = 50;
};

/// One ranged detection entering the tracker.
struct TrackObservation {
  Detection det;
  std::vector<double> feature;
  DepthCandidates depth;
};

struct TrackRecord {
  int frame_id = 0;
  int track_id = 0;
  double x_rel = 0, y_rel = 0, v_x = 0, v_y = 0;
  DepthSource depth_source = DepthSource::kStereo;
  bool valid_speed = false;
};

/// Detection-to-track pipeline stage: predict, associate, update, manage the
/// tentative/confirmed/deleted lifecycle, and emit per-frame records for
/// confirmed tracks.
class Tracker {
 public:
  explicit Tracker(TrackerConfig cfg = {}) : cfg_(cfg) {}

  const std::vector<Tracklet>& tracks() const { return tracks_; }

  std::vector<TrackRecord> step(int frame_id, double t_now, double dt,
                                const EgoState& ego,
                                const std::vector<TrackObservation>& obs,
                                const StereoCalibration* calib, int img_w,
                                int img_h) {
    for (auto& t : tracks_) {
      kf_predict(t, dt, ego, cfg_.sigma_a);
      ++t.age;
    }

    // fuse depth per observation up front; the gate uses the fused range
    std::vector<std::optional<DepthEstimate>> fused(obs.size());
    std::vector<DetObservation> dets(obs.size());
    for (std::size_t i = 0; i < obs.size(); ++i) {
      dets[i].det = obs[i].det;
      dets[i].feature = obs[i].feature;
      const auto& d = obs[i].depth;
      if (d.stereo || d.gpt || d.size) {
        fused[i] = fuse_depth(d, cfg_.fuse_sanity_ratio);
        dets[i].x_rel = fused[i]->point_imu.x;
      }
    }

    const auto assoc = associate(dets, tracks_, img_w, img_h, cfg_.assoc, calib);

    for (const auto& [di, ti] : assoc.matches) {
      Tracklet& t = tracks_[ti];
      ++t.hits;
      t.misses = 0;
      if (t.hits >= cfg_.confirm_hits) t.confirmed = true;
      if (fused[di]) {
        const DepthEstimate& e = *fused[di];
        std::vector<double> z{e.point_imu.x, e.point_imu.y};
        std::vector<double> r{
            std::max(e.cov_imu(0, 0), cfg_.min_meas_var), e.cov_imu(0, 1),
            e.cov_imu(1, 0), std::max(e.cov_imu(1, 1), cfg_.min_meas_var)};
        kf_update(t, z, false, r);
        t.depth_source = e.source;
        push_history(t, obs[di].depth, t_now);
        update_geometry(t, obs[di].det, e, calib, img_w);
      }
      t.last_box = obs[di].det;
      t.box_x_rel = t.x[0];
      if (!obs[di].feature.empty()) t.feature = obs[di].feature;
      update_speed(t, ego);
    }

    for (int di : assoc.unmatched_dets) {
      if (!fused[di]) continue;  // nothing to range: cannot seed a track
      Tracklet t;
      t.id = next_id_++;
      t.x = {fused[di]->point_imu.x, fused[di]->point_imu.y, 0, 0};
      t.P = {cfg_.init_pos_var, 0, 0, 0,  //
             0, cfg_.init_pos_var, 0, 0,  //
             0, 0, cfg_.init_vel_var, 0,  //
             0, 0, 0, cfg_.init_vel_var};
      t.last_box = obs[di].det;
      t.box_x_rel = t.x[0];
      t.feature = obs[di].feature;
      t.depth_source = fused[di]->source;
      t.age = 1;
      t.hits = 1;
      t.confirmed = t.hits >= cfg_.confirm_hits;
      push_history(t, obs[di].depth, t_now);
      tracks_.push_back(std::move(t));
    }

    for (int ti : assoc.unmatched_tracks) ++tracks_[ti].misses;
    tracks_.erase(std::remove_if(tracks_.begin(), tracks_.end(),
                                 [&](const Tracklet& t) {
                                   return t.misses >= cfg_.max_misses;
                                 }),
                  tracks_.end());

    std::vector<TrackRecord> records;
    for (const auto& t : tracks_) {
      if (!t.confirmed) continue;
      records.push_back({frame_id, t.id, t.x[0], t.x[1], t.x[2], t.x[3],
                         t.depth_source,
                         t.speed_status == SpeedStatus::kReliable});
    }
    return records;
  }

 private:
  void push_history(Tracklet& t, const DepthCandidates& d, double t_now) {
    const std::optional<DepthEstimate>& mono = d.gpt ? d.gpt : d.size;
    // aligned series only: both cues must see the object this frame
    if (d.stereo && mono) {
      t.history_stereo.emplace_back(t_now, d.stereo->point_imu.x);
      t.history_mono.emplace_back(t_now, mono->point_imu.x);
      while (int(t.history_stereo.size()) > cfg_.speed_window) {
        t.history_stereo.erase(t.history_stereo.begin());
        t.history_mono.erase(t.history_mono.begin());
      }
    }
  }

  void update_speed(Tracklet& t, const EgoState& ego) {
    if (t.history_stereo.size() < 2) return;
    const auto [v, status] = estimate_speed(t.history_stereo, t.history_mono,
                                            ego.speed, cfg_.speed_agree_ratio);
    t.speed = v;
    t.speed_status = status;
  }

  void update_geometry(Tracklet& t, const Detection& det, const DepthEstimate& e,
                       const StereoCalibration* calib, int img_w) {
    if (!calib || e.z_cam <= 0) return;
    const double width_m = det.w * img_w * e.z_cam / calib->f;
    t.geometry_measurements.push_back(width_m);
    if (int(t.geometry_measurements.size()) > cfg_.max_geometry_meas)
      t.geometry_measurements.erase(t.geometry_measurements.begin());
    const auto r = irls_estimate(t.geometry_measurements, cfg_.irls_iterations,
                                 cfg_.irls_delta);
    t.geometry_estimate = r.value;
    t.geometry_weights = r.weights;
  }

  TrackerConfig cfg_;
  std::vector<Tracklet> tracks_;
  int next_id_ = 1;
};

}  // namespace ranger
