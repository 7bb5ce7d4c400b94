#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <future>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ranger/autorect.hpp"
#include "ranger/bm.hpp"
#include "ranger/io.hpp"
#include "ranger/object_refiner.hpp"
#include "ranger/pgm.hpp"
#include "ranger/radar_refiner.hpp"
#include "ranger/sgm.hpp"
#include "ranger/synth.hpp"
#include "ranger/template_match.hpp"
#include "ranger/tracker.hpp"

// Frame pipeline: detections + stereo pair + radar in, per-object depth,
// tracks, and refiner logs out.  Per frame the independent stages (primary
// depth, rectification search, mono cues) run concurrently and join at a
// barrier; refinement, closest-point selection, tracking and fusion then run
// sequentially.  All reductions use fixed orders so results are bit-identical
// across worker counts.

namespace ranger {

enum class DepthMethod { kTemplateMatcher, kStereoBm, kStereoSgm };

inline std::string to_string(DepthMethod m) {
  switch (m) {
    case DepthMethod::kStereoBm: return "STEREO_BM";
    case DepthMethod::kStereoSgm: return "STEREO_SGM";
    default: return "TEMPLATE_MATCHER";
  }
}

inline DepthMethod depth_method_from_string(const std::string& s) {
  if (s == "STEREO_BM") return DepthMethod::kStereoBm;
  if (s == "STEREO_SGM") return DepthMethod::kStereoSgm;
  if (s == "TEMPLATE_MATCHER") return DepthMethod::kTemplateMatcher;
  throw std::invalid_argument("unknown depth method '" + s + "'");
}

struct RectSearchConfig {
  bool enabled = true;
  int delta_min = -3, delta_max = 3;
  int window = 5;          // median filter length, frames
  double rate_limit = 1;   // max applied-offset change, px per frame
  // the search scores matches strictly above the BM floor, so the floor sits
  // below zero: distant background at d ~ 0 must count as matched, otherwise
  // a misaligned pair full of spurious positive matches can outscore the
  // correctly aligned one
  BmParams bm{32, 9, -4, 10, 10, 1};
};

struct PipelineConfig {
  DepthMethod method = DepthMethod::kTemplateMatcher;
  StereoCalibration calib;
  RangerConfig ranger;
  BmParams bm;
  SgmParams sgm;
  TrackerConfig tracker;
  RectSearchConfig rect;
  bool radar_refiner = true;   // acts on dense maps only
  bool object_refiner = true;  // acts on per-object matcher output only
  int vote_half_range_px = 4;
  double vote_lambda = 0.3;
  double vote_smooth_sigma_px = 1.0;
  ObjRefinerState obj_refiner_init;
  double obj_cand_half_px = 2.0, obj_cand_step_px = 0.25;
  double sigma_obs2 = 0.3;   // per-sample disparity variance, px^2
  double var_gamma = 1.0;    // near-vs-all mixture penalty weight
  double sigma_sys2 = 0.01;  // systematic disparity variance floor, px^2
  double sigma_x2 = 0.25, sigma_y2 = 0.25;  // lateral pixel noise, px^2
  double tm_sigma_d2 = 0.0625;  // matcher disparity variance, px^2
  double fps = 10;
  std::map<int, double> class_width_m = {{0, 1.9}, {1, 2.5}};
  int workers = 1;
};

inline void validate(const PipelineConfig& cfg) {
  if (cfg.calib.f <= 0 || cfg.calib.b <= 0)
    throw std::invalid_argument("pipeline: calibration not set");
  if (cfg.fps <= 0) throw std::invalid_argument("pipeline: fps must be positive");
  if (cfg.workers < 1) throw std::invalid_argument("pipeline: workers must be >= 1");
  validate(cfg.ranger);
  validate(cfg.bm);
  validate(cfg.sgm);
  validate(cfg.rect.bm);
}

struct FrameInput {
  int frame_id = 0;
  GrayImage left, right;
  std::vector<Detection> detections;
  std::vector<RadarDetection> radar;
  EgoState ego;
};

struct PipelineResult {
  std::vector<FrameObjectDisparity> objects;
  std::vector<DepthRecord> depth;
  std::vector<TrackRecord> tracks;
  std::vector<RefinerLogRecord> refiner_log;
};

class Pipeline {
 public:
  explicit Pipeline(const PipelineConfig& cfg)
      : cfg_(cfg),
        rect_state_(cfg.rect.window, cfg.rect.rate_limit),
        vote_state_(cfg.vote_half_range_px, cfg.vote_lambda,
                    cfg.vote_smooth_sigma_px),
        obj_state_(cfg.obj_refiner_init),
        tracker_(cfg.tracker) {
    validate(cfg_);
  }

  void process_frame(const FrameInput& in, PipelineResult& out) {
    const std::string at = "frame " + std::to_string(in.frame_id);
    if (in.left.width == 0 || in.right.width == 0)
      throw std::runtime_error(at + ": missing image");
    if (in.left.width != in.right.width || in.left.height != in.right.height)
      throw std::runtime_error(at + ": image dims differ");
    const int img_w = in.left.width, img_h = in.left.height;
    const bool dense = cfg_.method != DepthMethod::kTemplateMatcher;

    // rectification correction estimated on earlier frames applies now; the
    // search below runs on the uncorrected pair and feeds the next frame
    const double rect_applied = cfg_.rect.enabled ? rect_state_.current : 0.0;
    const int rect_shift = int(std::lround(rect_applied));
    GrayImage left_corr =
        rect_shift != 0 ? shift_vertical(in.left, rect_shift) : in.left;

    std::vector<int> sel = select_objects(in.detections, cfg_.ranger);
    std::sort(sel.begin(), sel.end());

    // --- concurrent stages: primary depth | rect search | mono cues ---
    auto rect_task = [&]() -> int {
      if (!cfg_.rect.enabled) return 0;
      const ImageRoi roi = rect_search_roi(img_w, img_h);
      return auto_rect_search(in.left, in.right, roi, cfg_.rect.delta_min,
                              cfg_.rect.delta_max, cfg_.rect.bm, 1);
    };
    auto mono_task = [&]() {
      std::vector<DepthCandidates> cand(sel.size());
      for (std::size_t k = 0; k < sel.size(); ++k) {
        const Detection& det = in.detections[std::size_t(sel[k])];
        if ((det.cy + det.h / 2) * img_h > cfg_.calib.cy)
          cand[k].gpt = ground_point_depth(det, cfg_.calib, img_w, img_h);
        const auto it = cfg_.class_width_m.find(det.class_id);
        if (it != cfg_.class_width_m.end() && det.w * img_w > 0)
          cand[k].size = size_based_depth(det, it->second, cfg_.calib, img_w, img_h);
      }
      return cand;
    };

    std::vector<ObjectDisparity> objects;
    DisparityMap dmap;
    int rect_raw = 0;
    std::vector<DepthCandidates> cand;
    if (cfg_.workers > 1) {
      auto rect_fut = std::async(std::launch::async, rect_task);
      auto mono_fut = std::async(std::launch::async, mono_task);
      run_primary_depth(left_corr, in.right, in.detections, objects, dmap);
      rect_raw = rect_fut.get();
      cand = mono_fut.get();
    } else {
      run_primary_depth(left_corr, in.right, in.detections, objects, dmap);
      rect_raw = rect_task();
      cand = mono_task();
    }
    if (cfg_.rect.enabled) filter_offset(rect_state_, rect_raw);

    // --- refiners (sequential past the barrier) ---
    double radar_applied = 0;
    if (dense && cfg_.radar_refiner)
      radar_applied = radar_refine_step(dmap, in.radar, vote_state_, cfg_.calib);

    double obj_applied = obj_state_.prev_offset;
    if (!dense && cfg_.object_refiner) {
      std::vector<StereoObservation> stereo_obs;
      for (std::size_t k = 0; k < sel.size(); ++k)
        if (objects[k].valid && objects[k].disparity > 0) {
          const Detection& det = in.detections[std::size_t(sel[k])];
          stereo_obs.push_back(
              {det.cx * img_w, det.cy * img_h, objects[k].disparity});
        }
      std::vector<Vec3> radar_pts;
      for (const auto& r : in.radar) radar_pts.push_back(r.position);
      if (!stereo_obs.empty() && !radar_pts.empty()) {
        const auto coarse = object_refiner_coarse(
            stereo_obs, radar_pts,
            default_offset_candidates(cfg_.obj_cand_half_px, cfg_.obj_cand_step_px),
            obj_state_, cfg_.calib);
        obj_applied = object_refiner_iterate(coarse.pairs, coarse.offset, obj_state_);
      }
      for (auto& o : objects)
        if (o.valid) o.disparity += obj_applied;
    }

    // --- closest point + records ---
    std::vector<TrackObservation> obs(sel.size());
    std::vector<ObjectDisparity> dense_objects;
    for (std::size_t k = 0; k < sel.size(); ++k) {
      const Detection& det = in.detections[std::size_t(sel[k])];
      if (dense) {
        const auto box_d = box_disparity(dmap, det, img_w, img_h);
        if (box_d && box_d->median > 0)
          cand[k].stereo = make_stereo_estimate(
              det.cx * img_w, det.cy * img_h, box_d->median, box_d->variance,
              cfg_.sigma_x2, cfg_.sigma_y2, cfg_.calib);
        ObjectDisparity o;
        o.det_id = det.id;
        o.kind = classify_far_close(det, img_w, img_h, cfg_.ranger.tau_s);
        o.disparity = box_d ? box_d->median : 0.0;
        o.valid = box_d.has_value();
        o.n_blocks_used = box_d ? box_d->count : 0;
        dense_objects.push_back(o);
      } else if (objects[k].valid && objects[k].disparity > 0) {
        cand[k].stereo = make_stereo_estimate(det.cx * img_w, det.cy * img_h,
                                              objects[k].disparity, cfg_.tm_sigma_d2,
                                              cfg_.sigma_x2, cfg_.sigma_y2,
                                              cfg_.calib);
      }

      DepthRecord rec;
      rec.frame_id = in.frame_id;
      rec.det_id = det.id;
      if (cand[k].stereo) {
        rec.disparity = cand[k].stereo->disparity;
        rec.valid = true;
        rec.clp_by_stereo = cand[k].stereo->z_cam;
      }
      if (cand[k].gpt) rec.clp_by_gpt = cand[k].gpt->z_cam;
      if (cand[k].size) rec.clp_by_size = cand[k].size->z_cam;
      if (cand[k].stereo || cand[k].gpt || cand[k].size) {
        const DepthEstimate fused =
            fuse_depth(cand[k], cfg_.tracker.fuse_sanity_ratio);
        rec.z_fused = fused.z_cam;
        rec.source = fused.source;
      }
      if (!rec.valid) rec.disparity = std::numeric_limits<double>::quiet_NaN();
      out.depth.push_back(rec);

      obs[k].det = det;
      obs[k].feature = object_feature(det.id);
      obs[k].depth = cand[k];
    }

    const double t_now = frame_count_ / cfg_.fps;
    const double dt = 1.0 / cfg_.fps;
    auto recs = tracker_.step(in.frame_id, t_now, dt, in.ego, obs, &cfg_.calib,
                              img_w, img_h);
    out.tracks.insert(out.tracks.end(), recs.begin(), recs.end());
    ++frame_count_;

    for (const auto& o : dense ? dense_objects : objects)
      out.objects.push_back({in.frame_id, o});
    out.refiner_log.push_back({in.frame_id, rect_applied, radar_applied, obj_applied});
  }

  const Tracker& tracker() const { return tracker_; }

 private:
  void run_primary_depth(const GrayImage& left, const GrayImage& right,
                         const std::vector<Detection>& dets,
                         std::vector<ObjectDisparity>& objects,
                         DisparityMap& dmap) {
    switch (cfg_.method) {
      case DepthMethod::kTemplateMatcher:
        objects = estimate_object_disparities(left, right, dets, cfg_.ranger,
                                              nullptr, cfg_.workers, nullptr);
        break;
      case DepthMethod::kStereoBm:
        dmap = bm_disparity(left, right, cfg_.bm, cfg_.workers);
        break;
      case DepthMethod::kStereoSgm:
        dmap = sgm_disparity(left, right, cfg_.sgm, cfg_.workers);
        break;
    }
  }

  ImageRoi rect_search_roi(int img_w, int img_h) const {
    // central half of the image: textured, usually unoccluded by the hood
    ImageRoi roi{img_w / 4, img_h / 4, img_w * 3 / 4, img_h * 3 / 4};
    const int need = cfg_.rect.bm.block_size;
    roi.x1 = std::max(roi.x1, std::min(img_w, roi.x0 + need));
    roi.y1 = std::max(roi.y1, std::min(img_h, roi.y0 + need));
    return roi;
  }

  struct BoxDisparity {
    double median = 0;
    double variance = 0;
    int count = 0;
  };

  // median disparity over the box's valid pixels plus its dynamic variance
  // (near subset = top quartile of samples)
  std::optional<BoxDisparity> box_disparity(const DisparityMap& m,
                                            const Detection& det, int img_w,
                                            int img_h) const {
    const PixelBox box = to_pixel_box(det, img_w, img_h);
    const int y0 = std::max(0, int(std::floor(box.y0)));
    const int y1 = std::min(img_h, int(std::ceil(box.y1)));
    const int x0 = std::max(0, int(std::floor(box.x0)));
    const int x1 = std::min(img_w, int(std::ceil(box.x1)));
    std::vector<double> d;
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x)
        if (m.valid(x, y)) d.push_back(m.disparity(x, y));
    if (d.empty()) return std::nullopt;
    std::sort(d.begin(), d.end());
    const std::size_t near_from = (3 * (d.size() - 1)) / 4;
    const std::vector<double> near(d.begin() + std::ptrdiff_t(near_from), d.end());
    BoxDisparity out;
    out.median = d[(d.size() - 1) / 2];
    out.variance = dynamic_disparity_variance(near, d, cfg_.sigma_obs2,
                                              cfg_.var_gamma, cfg_.sigma_sys2);
    out.count = int(d.size());
    return out;
  }

  PipelineConfig cfg_;
  RectOffsetState rect_state_;
  VoteState vote_state_;
  ObjRefinerState obj_state_;
  Tracker tracker_;
  int frame_count_ = 0;
};

inline PipelineResult run_pipeline(const PipelineConfig& cfg,
                                   const std::vector<FrameInput>& frames) {
  Pipeline p(cfg);
  PipelineResult out;
  for (const auto& f : frames) p.process_frame(f, out);
  return out;
}

// ---------------------------------------------------------------------------
// run directory: left_NNNN.pgm / right_NNNN.pgm plus record files

inline std::string frame_image_name(const char* side, int frame_id) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s_%04d.pgm", side, frame_id);
  return buf;
}

inline std::vector<FrameInput> load_run_directory(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir))
    throw std::runtime_error("load_run_directory: no such directory: " + dir);

  std::vector<int> ids;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    int id = 0;
    if (std::sscanf(name.c_str(), "left_%d.pgm", &id) == 1) ids.push_back(id);
  }
  std::sort(ids.begin(), ids.end());

  std::map<int, std::vector<Detection>> dets;
  std::map<int, std::vector<RadarDetection>> radar;
  std::map<int, EgoState> ego;
  if (fs::exists(dir + "/detections.txt"))
    for (const auto& r : load_detections(dir + "/detections.txt"))
      dets[r.frame_id].push_back(r.det);
  if (fs::exists(dir + "/radar.txt"))
    for (const auto& r : load_radar_records(dir + "/radar.txt"))
      radar[r.frame_id].push_back(r.radar);
  if (fs::exists(dir + "/ego.txt"))
    for (const auto& r : load_ego_records(dir + "/ego.txt"))
      ego[r.frame_id] = {r.speed, r.yaw_rate};

  std::vector<FrameInput> frames;
  for (int id : ids) {
    FrameInput f;
    f.frame_id = id;
    f.left = load_pgm(dir + "/" + frame_image_name("left", id));
    const std::string right_path = dir + "/" + frame_image_name("right", id);
    if (!fs::exists(right_path))
      throw std::runtime_error("frame " + std::to_string(id) +
                               ": missing right image " + right_path);
    f.right = load_pgm(right_path);
    if (auto it = dets.find(id); it != dets.end()) f.detections = it->second;
    if (auto it = radar.find(id); it != radar.end()) f.radar = it->second;
    if (auto it = ego.find(id); it != ego.end()) f.ego = it->second;
    frames.push_back(std::move(f));
  }
  return frames;
}

inline void save_pipeline_outputs(const PipelineResult& res,
                                  const std::string& dir) {
  std::filesystem::create_directories(dir);
  save_object_records(res.objects, dir + "/objects.txt");
  save_depth_records(res.depth, dir + "/depth.txt");
  save_track_records(res.tracks, dir + "/tracks.txt");
  save_refiner_log(res.refiner_log, dir + "/refiners.txt");
}

// ---------------------------------------------------------------------------
// synthetic runs: render frames in memory from a scene description

struct SyntheticRun {
  std::vector<FrameInput> frames;
  std::vector<TruthRecord> truth;
};

inline SyntheticRun make_synthetic_frames(SceneConfig scene, int n_frames,
                                          double dt = 0.1) {
  if (n_frames < 0)
    throw std::invalid_argument("make_synthetic_frames: negative frame count");
  if (dt <= 0) throw std::invalid_argument("make_synthetic_frames: dt must be > 0");
  SyntheticRun run;
  const std::uint64_t base_seed = scene.seed;
  for (int fi = 0; fi < n_frames; ++fi) {
    scene.seed = base_seed + std::uint64_t(fi);
    const RenderResult r = render_stereo_pair(scene);
    FrameInput f;
    f.frame_id = fi;
    f.left = r.left;
    f.right = r.right;
    f.detections = ground_truth_detections(scene);
    f.radar = simulate_radar(scene);
    f.ego = {scene.ego_speed, scene.ego_yaw_rate};
    run.frames.push_back(std::move(f));
    for (const auto& t : r.objects)
      run.truth.push_back({fi, t.id, t.disparity, t.z_cam, t.position});
    advance_scene(scene, dt);
  }
  return run;
}

inline void save_synthetic_run(const SyntheticRun& run, const SceneConfig& scene,
                               const std::string& dir) {
  std::filesystem::create_directories(dir);
  std::vector<FrameDetection> dets;
  std::vector<FrameRadar> radar;
  std::vector<EgoRecord> ego;
  for (const auto& f : run.frames) {
    save_pgm(f.left, dir + "/" + frame_image_name("left", f.frame_id));
    save_pgm(f.right, dir + "/" + frame_image_name("right", f.frame_id));
    for (const auto& d : f.detections) dets.push_back({f.frame_id, d});
    for (const auto& r : f.radar) radar.push_back({f.frame_id, r});
    ego.push_back({f.frame_id, f.ego.speed, f.ego.yaw_rate});
  }
  save_detections(dets, dir + "/detections.txt");
  save_radar_records(radar, dir + "/radar.txt");
  save_ego_records(ego, dir + "/ego.txt");
  save_truth_records(run.truth, dir + "/truth.txt");
  save_scene(scene, dir + "/scene.txt");
  save_calibration(scene.calib, dir + "/calib.txt");
}

}  // namespace ranger
