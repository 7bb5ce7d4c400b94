#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ranger/detection.hpp"
#include "ranger/geometry.hpp"
#include "ranger/synth.hpp"
#include "ranger/template_match.hpp"
#include "ranger/tracker.hpp"

// Line-delimited record files shared between the pipeline stages, the scene
// generator and the evaluator.  Floats are written with fixed 6-decimal
// precision so record files are byte-stable across runs.

namespace ranger {

namespace detail {

inline std::string fmt6(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

inline std::vector<std::string> split_tokens(const std::string& line) {
  std::istringstream ss(line);
  std::vector<std::string> out;
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

inline double to_double(const std::string& tok, const std::string& ctx) {
  try {
    size_t pos = 0;
    double v = std::stod(tok, &pos);
    if (pos != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error(ctx + ": bad number '" + tok + "'");
  }
}

inline int to_int(const std::string& tok, const std::string& ctx) {
  try {
    size_t pos = 0;
    int v = std::stoi(tok, &pos);
    if (pos != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error(ctx + ": bad integer '" + tok + "'");
  }
}

inline std::ofstream open_out(const std::string& path, const std::string& ctx) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error(ctx + ": cannot open " + path);
  return f;
}

inline std::ifstream open_in(const std::string& path, const std::string& ctx) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error(ctx + ": cannot open " + path);
  return f;
}

}  // namespace detail

inline std::string to_string(DepthSource s) {
  switch (s) {
    case DepthSource::kStereo: return "STEREO";
    case DepthSource::kGpt: return "GPT";
    default: return "SIZE";
  }
}

inline DepthSource depth_source_from_string(const std::string& s) {
  if (s == "STEREO") return DepthSource::kStereo;
  if (s == "GPT") return DepthSource::kGpt;
  if (s == "SIZE") return DepthSource::kSize;
  throw std::runtime_error("unknown depth source '" + s + "'");
}

inline std::string to_string(ObjectKind k) {
  return k == ObjectKind::kFar ? "FAR" : "CLOSE";
}

inline ObjectKind object_kind_from_string(const std::string& s) {
  if (s == "FAR") return ObjectKind::kFar;
  if (s == "CLOSE") return ObjectKind::kClose;
  throw std::runtime_error("unknown object kind '" + s + "'");
}

// ---------------------------------------------------------------------------
// detections: `frame_id det_id class cx cy w h` (box normalized to [0,1])

struct FrameDetection {
  int frame_id = 0;
  Detection det;
};

inline void save_detections(const std::vector<FrameDetection>& recs,
                            const std::string& path) {
  auto f = detail::open_out(path, "save_detections");
  for (const auto& r : recs)
    f << r.frame_id << ' ' << r.det.id << ' ' << r.det.class_id << ' '
      << detail::fmt6(r.det.cx) << ' ' << detail::fmt6(r.det.cy) << ' '
      << detail::fmt6(r.det.w) << ' ' << detail::fmt6(r.det.h) << '\n';
}

inline std::vector<FrameDetection> load_detections(const std::string& path) {
  auto f = detail::open_in(path, "load_detections");
  std::vector<FrameDetection> out;
  std::string line;
  while (std::getline(f, line)) {
    auto t = detail::split_tokens(line);
    if (t.empty() || t[0][0] == '#') continue;
    if (t.size() != 7)
      throw std::runtime_error("load_detections: bad line: " + line);
    FrameDetection r;
    r.frame_id = detail::to_int(t[0], "load_detections");
    r.det.id = detail::to_int(t[1], "load_detections");
    r.det.class_id = detail::to_int(t[2], "load_detections");
    r.det.cx = detail::to_double(t[3], "load_detections");
    r.det.cy = detail::to_double(t[4], "load_detections");
    r.det.w = detail::to_double(t[5], "load_detections");
    r.det.h = detail::to_double(t[6], "load_detections");
    out.push_back(r);
  }
  return out;
}

// ---------------------------------------------------------------------------
// per-object matcher results: `frame_id det_id kind disparity valid n_blocks`

struct FrameObjectDisparity {
  int frame_id = 0;
  ObjectDisparity obj;
};

inline void save_object_records(const std::vector<FrameObjectDisparity>& recs,
                                const std::string& path) {
  auto f = detail::open_out(path, "save_object_records");
  for (const auto& r : recs)
    f << r.frame_id << ' ' << r.obj.det_id << ' ' << to_string(r.obj.kind) << ' '
      << detail::fmt6(r.obj.disparity) << ' ' << (r.obj.valid ? 1 : 0) << ' '
      << r.obj.n_blocks_used << '\n';
}

inline std::vector<FrameObjectDisparity> load_object_records(
    const std::string& path) {
  auto f = detail::open_in(path, "load_object_records");
  std::vector<FrameObjectDisparity> out;
  std::string line;
  while (std::getline(f, line)) {
    auto t = detail::split_tokens(line);
    if (t.empty() || t[0][0] == '#') continue;
    if (t.size() != 6)
      throw std::runtime_error("load_object_records: bad line: " + line);
    FrameObjectDisparity r;
    r.frame_id = detail::to_int(t[0], "load_object_records");
    r.obj.det_id = detail::to_int(t[1], "load_object_records");
    r.obj.kind = object_kind_from_string(t[2]);
    r.obj.disparity = detail::to_double(t[3], "load_object_records");
    r.obj.valid = detail::to_int(t[4], "load_object_records") != 0;
    r.obj.n_blocks_used = detail::to_int(t[5], "load_object_records");
    out.push_back(r);
  }
  return out;
}

// ---------------------------------------------------------------------------
// radar detections: `frame_id x y z ex ey ez` (vehicle frame, meters)

struct FrameRadar {
  int frame_id = 0;
  RadarDetection radar;
};

inline void save_radar_records(const std::vector<FrameRadar>& recs,
                               const std::string& path) {
  auto f = detail::open_out(path, "save_radar_records");
  for (const auto& r : recs)
    f << r.frame_id << ' ' << detail::fmt6(r.radar.position.x) << ' '
      << detail::fmt6(r.radar.position.y) << ' ' << detail::fmt6(r.radar.position.z)
      << ' ' << detail::fmt6(r.radar.extent.x) << ' '
      << detail::fmt6(r.radar.extent.y) << ' ' << detail::fmt6(r.radar.extent.z)
      << '\n';
}

inline std::vector<FrameRadar> load_radar_records(const std::string& path) {
  auto f = detail::open_in(path, "load_radar_records");
  std::vector<FrameRadar> out;
  std::string line;
  int idx = 0;
  while (std::getline(f, line)) {
    auto t = detail::split_tokens(line);
    if (t.empty() || t[0][0] == '#') continue;
    if (t.size() != 7)
      throw std::runtime_error("load_radar_records: bad line: " + line);
    FrameRadar r;
    r.frame_id = detail::to_int(t[0], "load_radar_records");
    r.radar.position.x = detail::to_double(t[1], "load_radar_records");
    r.radar.position.y = detail::to_double(t[2], "load_radar_records");
    r.radar.position.z = detail::to_double(t[3], "load_radar_records");
    r.radar.extent.x = detail::to_double(t[4], "load_radar_records");
    r.radar.extent.y = detail::to_double(t[5], "load_radar_records");
    r.radar.extent.z = detail::to_double(t[6], "load_radar_records");
    r.radar.id = idx++;  // file format carries no id; use load order
    out.push_back(r);
  }
  return out;
}

// ---------------------------------------------------------------------------
// refiner offsets per frame: `frame_id rect_delta radar_offset obj_offset`

struct RefinerLogRecord {
  int frame_id = 0;
  double rect_delta = 0;    // applied rectification row offset, px
  double radar_offset = 0;  // applied dense-map disparity offset, px
  double obj_offset = 0;    // applied per-object disparity offset, px
};

inline void save_refiner_log(const std::vector<RefinerLogRecord>& recs,
                             const std::string& path) {
  auto f = detail::open_out(path, "save_refiner_log");
  for (const auto& r : recs)
    f << r.frame_id << ' ' << detail::fmt6(r.rect_delta) << ' '
      << detail::fmt6(r.radar_offset) << ' ' << detail::fmt6(r.obj_offset) << '\n';
}

inline std::vector<RefinerLogRecord> load_refiner_log(const std::string& path) {
  auto f = detail::open_in(path, "load_refiner_log");
  std::vector<RefinerLogRecord> out;
  std::string line;
  while (std::getline(f, line)) {
    auto t = detail::split_tokens(line);
    if (t.empty() || t[0][0] == '#') continue;
    if (t.size() != 4)
      throw std::runtime_error("load_refiner_log: bad line: " + line);
    RefinerLogRecord r;
    r.frame_id = detail::to_int(t[0], "load_refiner_log");
    r.rect_delta = detail::to_double(t[1], "load_refiner_log");
    r.radar_offset = detail::to_double(t[2], "load_refiner_log");
    r.obj_offset = detail::to_double(t[3], "load_refiner_log");
    out.push_back(r);
  }
  return out;
}

// ---------------------------------------------------------------------------
// closest-point depth per selected detection:
// `frame_id det_id disparity valid clp_by_stereo clp_by_gpt clp_by_size
//  z_fused source`; absent candidates serialize as nan.

struct DepthRecord {
  int frame_id = 0;
  int det_id = 0;
  double disparity = 0;  // px at full resolution, after refiners
  bool valid = false;    // stereo measurement usable
  double clp_by_stereo = std::numeric_limits<double>::quiet_NaN();
  double clp_by_gpt = std::numeric_limits<double>::quiet_NaN();
  double clp_by_size = std::numeric_limits<double>::quiet_NaN();
  double z_fused = std::numeric_limits<double>::quiet_NaN();
  DepthSource source = DepthSource::kStereo;
};

inline void save_depth_records(const std::vector<DepthRecord>& recs,
                               const std::string& path) {
  auto f = detail::open_out(path, "save_depth_records");
  for (const auto& r : recs)
    f << r.frame_id << ' ' << r.det_id << ' ' << detail::fmt6(r.disparity) << ' '
      << (r.valid ? 1 : 0) << ' ' << detail::fmt6(r.clp_by_stereo) << ' '
      << detail::fmt6(r.clp_by_gpt) << ' ' << detail::fmt6(r.clp_by_size) << ' '
      << detail::fmt6(r.z_fused) << ' ' << to_string(r.source) << '\n';
}

inline std::vector<DepthRecord> load_depth_records(const std::string& path) {
  auto f = detail::open_in(path, "load_depth_records");
  std::vector<DepthRecord> out;
  std::string line;
  while (std::getline(f, line)) {
    auto t = detail::split_tokens(line);
    if (t.empty() || t[0][0] == '#') continue;
    if (t.size() != 9)
      throw std::runtime_error("load_depth_records: bad line: " + line);
    DepthRecord r;
    r.frame_id = detail::to_int(t[0], "load_depth_records");
    r.det_id = detail::to_int(t[1], "load_depth_records");
    r.disparity = detail::to_double(t[2], "load_depth_records");
    r.valid = detail::to_int(t[3], "load_depth_records") != 0;
    r.clp_by_stereo = detail::to_double(t[4], "load_depth_records");
    r.clp_by_gpt = detail::to_double(t[5], "load_depth_records");
    r.clp_by_size = detail::to_double(t[6], "load_depth_records");
    r.z_fused = detail::to_double(t[7], "load_depth_records");
    r.source = depth_source_from_string(t[8]);
    out.push_back(r);
  }
  return out;
}

// ---------------------------------------------------------------------------
// track output: `frame_id track_id x_rel y_rel v_x v_y depth_source valid_speed`

inline void save_track_records(const std::vector<TrackRecord>& recs,
                               const std::string& path) {
  auto f = detail::open_out(path, "save_track_records");
  for (const auto& r : recs)
    f << r.frame_id << ' ' << r.track_id << ' ' << detail::fmt6(r.x_rel) << ' '
      << detail::fmt6(r.y_rel) << ' ' << detail::fmt6(r.v_x) << ' '
      << detail::fmt6(r.v_y) << ' ' << to_string(r.depth_source) << ' '
      << (r.valid_speed ? 1 : 0) << '\n';
}

inline std::vector<TrackRecord> load_track_records(const std::string& path) {
  auto f = detail::open_in(path, "load_track_records");
  std::vector<TrackRecord> out;
  std::string line;
  while (std::getline(f, line)) {
    auto t = detail::split_tokens(line);
    if (t.empty() || t[0][0] == '#') continue;
    if (t.size() != 8)
      throw std::runtime_error("load_track_records: bad line: " + line);
    TrackRecord r;
    r.frame_id = detail::to_int(t[0], "load_track_records");
    r.track_id = detail::to_int(t[1], "load_track_records");
    r.x_rel = detail::to_double(t[2], "load_track_records");
    r.y_rel = detail::to_double(t[3], "load_track_records");
    r.v_x = detail::to_double(t[4], "load_track_records");
    r.v_y = detail::to_double(t[5], "load_track_records");
    r.depth_source = depth_source_from_string(t[6]);
    r.valid_speed = detail::to_int(t[7], "load_track_records") != 0;
    out.push_back(r);
  }
  return out;
}

// ---------------------------------------------------------------------------
// ground truth per object: `frame_id obj_id disparity z_cam x y z`
// (x y z = object position in the vehicle frame)

struct TruthRecord {
  int frame_id = 0;
  int obj_id = 0;
  double disparity = 0;
  double z_cam = 0;
  Vec3 position;
};

inline void save_truth_records(const std::vector<TruthRecord>& recs,
                               const std::string& path) {
  auto f = detail::open_out(path, "save_truth_records");
  for (const auto& r : recs)
    f << r.frame_id << ' ' << r.obj_id << ' ' << detail::fmt6(r.disparity) << ' '
      << detail::fmt6(r.z_cam) << ' ' << detail::fmt6(r.position.x) << ' '
      << detail::fmt6(r.position.y) << ' ' << detail::fmt6(r.position.z) << '\n';
}

inline std::vector<TruthRecord> load_truth_records(const std::string& path) {
  auto f = detail::open_in(path, "load_truth_records");
  std::vector<TruthRecord> out;
  std::string line;
  while (std::getline(f, line)) {
    auto t = detail::split_tokens(line);
    if (t.empty() || t[0][0] == '#') continue;
    if (t.size() != 7)
      throw std::runtime_error("load_truth_records: bad line: " + line);
    TruthRecord r;
    r.frame_id = detail::to_int(t[0], "load_truth_records");
    r.obj_id = detail::to_int(t[1], "load_truth_records");
    r.disparity = detail::to_double(t[2], "load_truth_records");
    r.z_cam = detail::to_double(t[3], "load_truth_records");
    r.position.x = detail::to_double(t[4], "load_truth_records");
    r.position.y = detail::to_double(t[5], "load_truth_records");
    r.position.z = detail::to_double(t[6], "load_truth_records");
    out.push_back(r);
  }
  return out;
}

// ---------------------------------------------------------------------------
// ego motion per frame: `frame_id speed yaw_rate`

struct EgoRecord {
  int frame_id = 0;
  double speed = 0;     // m/s
  double yaw_rate = 0;  // rad/s
};

inline void save_ego_records(const std::vector<EgoRecord>& recs,
                             const std::string& path) {
  auto f = detail::open_out(path, "save_ego_records");
  for (const auto& r : recs)
    f << r.frame_id << ' ' << detail::fmt6(r.speed) << ' '
      << detail::fmt6(r.yaw_rate) << '\n';
}

inline std::vector<EgoRecord> load_ego_records(const std::string& path) {
  auto f = detail::open_in(path, "load_ego_records");
  std::vector<EgoRecord> out;
  std::string line;
  while (std::getline(f, line)) {
    auto t = detail::split_tokens(line);
    if (t.empty() || t[0][0] == '#') continue;
    if (t.size() != 3)
      throw std::runtime_error("load_ego_records: bad line: " + line);
    EgoRecord r;
    r.frame_id = detail::to_int(t[0], "load_ego_records");
    r.speed = detail::to_double(t[1], "load_ego_records");
    r.yaw_rate = detail::to_double(t[2], "load_ego_records");
    out.push_back(r);
  }
  return out;
}

}  // namespace ranger
