#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>

#include "ranger/eval.hpp"
#include "ranger/pipeline.hpp"

using namespace ranger;
namespace fs = std::filesystem;

namespace {

SceneConfig demo_scene() {
  SceneConfig s;
  s.calib = make_calibration(2000, 0.30, s.width / 2.0, s.height / 2.0, 1.5);
  s.ego_speed = 10;
  return s;
}

SceneObject object_at(double z_fwd, double y_lat, int id, std::uint64_t seed) {
  SceneObject o;
  o.id = id;
  // grounded: box bottom on the road surface, so the ground-point cue agrees
  o.position = {z_fwd, y_lat, o.height_m / 2};
  o.texture_seed = seed;
  return o;
}

PipelineConfig demo_config(const SceneConfig& s) {
  PipelineConfig cfg;
  cfg.calib = s.calib;
  return cfg;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("object, depth, radar, and log records round-trip through files") {
  TempDir tmp("ranger_io_roundtrip");
  const std::string base = tmp.path.string();

  std::vector<FrameObjectDisparity> objs(2);
  objs[0].frame_id = 0;
  objs[0].obj.det_id = 3;
  objs[0].obj.kind = ObjectKind::kFar;
  objs[0].obj.disparity = 6.25;
  objs[0].obj.valid = true;
  objs[0].obj.n_blocks_used = 1;
  objs[1].frame_id = 1;
  objs[1].obj.det_id = 4;
  objs[1].obj.kind = ObjectKind::kClose;
  objs[1].obj.disparity = 31.5;
  objs[1].obj.valid = false;
  objs[1].obj.n_blocks_used = 0;
  save_object_records(objs, base + "/objects.txt");
  const auto objs_r = load_object_records(base + "/objects.txt");
  REQUIRE(objs_r.size() == 2);
  REQUIRE(objs_r[0].frame_id == 0);
  REQUIRE(objs_r[0].obj.det_id == 3);
  REQUIRE(objs_r[0].obj.kind == ObjectKind::kFar);
  REQUIRE(objs_r[0].obj.disparity == 6.25);
  REQUIRE(objs_r[0].obj.valid);
  REQUIRE(objs_r[1].obj.kind == ObjectKind::kClose);
  REQUIRE(!objs_r[1].obj.valid);

  DepthRecord d;
  d.frame_id = 2;
  d.det_id = 7;
  d.disparity = 5.5;
  d.valid = true;
  d.clp_by_stereo = 109.1;
  d.z_fused = 109.1;
  d.source = DepthSource::kStereo;
  DepthRecord nan_rec;  // depth-less detection: everything stays NaN
  nan_rec.frame_id = 3;
  nan_rec.det_id = 8;
  nan_rec.disparity = std::numeric_limits<double>::quiet_NaN();
  nan_rec.source = DepthSource::kGpt;
  save_depth_records({d, nan_rec}, base + "/depth.txt");
  const auto depth_r = load_depth_records(base + "/depth.txt");
  REQUIRE(depth_r.size() == 2);
  REQUIRE(depth_r[0].disparity == 5.5);
  REQUIRE(depth_r[0].clp_by_stereo == Catch::Approx(109.1));
  REQUIRE(std::isnan(depth_r[0].clp_by_gpt));
  REQUIRE(depth_r[0].source == DepthSource::kStereo);
  REQUIRE(std::isnan(depth_r[1].disparity));
  REQUIRE(std::isnan(depth_r[1].z_fused));
  REQUIRE(depth_r[1].source == DepthSource::kGpt);

  std::vector<FrameRadar> radar(1);
  radar[0].frame_id = 5;
  radar[0].radar.position = {30.5, -2.25, 1.0};
  radar[0].radar.extent = {4, 2, 1.6};
  save_radar_records(radar, base + "/radar.txt");
  const auto radar_r = load_radar_records(base + "/radar.txt");
  REQUIRE(radar_r.size() == 1);
  REQUIRE(radar_r[0].frame_id == 5);
  REQUIRE(radar_r[0].radar.position.x == Catch::Approx(30.5));
  REQUIRE(radar_r[0].radar.extent.z == Catch::Approx(1.6));

  const std::vector<RefinerLogRecord> log{{0, 1.0, -0.25, 0.125}};
  save_refiner_log(log, base + "/refiners.txt");
  const auto log_r = load_refiner_log(base + "/refiners.txt");
  REQUIRE(log_r.size() == 1);
  REQUIRE(log_r[0].rect_delta == 1.0);
  REQUIRE(log_r[0].radar_offset == -0.25);
  REQUIRE(log_r[0].obj_offset == 0.125);

  const std::vector<TrackRecord> tracks{
      {4, 2, 55.5, -1.25, -3.0, 0.5, DepthSource::kSize, true}};
  save_track_records(tracks, base + "/tracks.txt");
  const auto tracks_r = load_track_records(base + "/tracks.txt");
  REQUIRE(tracks_r.size() == 1);
  REQUIRE(tracks_r[0].track_id == 2);
  REQUIRE(tracks_r[0].x_rel == 55.5);
  REQUIRE(tracks_r[0].depth_source == DepthSource::kSize);
  REQUIRE(tracks_r[0].valid_speed);

  REQUIRE_THROWS_AS(load_depth_records(base + "/absent.txt"), std::runtime_error);
}

TEST_CASE("a pipeline over zero frames succeeds with empty outputs") {
  const auto cfg = demo_config(demo_scene());
  const auto res = run_pipeline(cfg, {});
  REQUIRE(res.objects.empty());
  REQUIRE(res.depth.empty());
  REQUIRE(res.tracks.empty());
  REQUIRE(res.refiner_log.empty());
}

TEST_CASE("pipeline configuration is validated on construction") {
  auto cfg = demo_config(demo_scene());
  cfg.fps = 0;
  REQUIRE_THROWS_AS(Pipeline(cfg), std::invalid_argument);
  cfg = demo_config(demo_scene());
  cfg.calib = {};
  REQUIRE_THROWS_AS(Pipeline(cfg), std::invalid_argument);
}

TEST_CASE("template matching ranges a far object within two percent") {
  SceneConfig s = demo_scene();
  s.objects.push_back(object_at(100, 0, 1, 3));  // d = 6
  const auto run = make_synthetic_frames(s, 6);
  const auto cfg = demo_config(s);
  const auto res = run_pipeline(cfg, run.frames);

  REQUIRE(res.depth.size() == 6);
  for (const auto& r : res.depth) {
    REQUIRE(r.valid);
    REQUIRE(std::abs(r.disparity - 6.0) <= 0.12);
    REQUIRE(r.source == DepthSource::kStereo);
    REQUIRE(std::abs(r.z_fused - 100.0) <= 2.0);
    REQUIRE(std::abs(r.clp_by_gpt - 100.0) <= 15.0);  // ground-point cue sane
  }
  REQUIRE(res.objects.size() == 6);
  for (const auto& o : res.objects) {
    REQUIRE(o.obj.kind == ObjectKind::kFar);
    REQUIRE(o.obj.valid);
  }
  REQUIRE(res.refiner_log.size() == 6);
  REQUIRE(!res.tracks.empty());  // the track confirms within six frames
  for (const auto& t : res.tracks) REQUIRE(std::abs(t.x_rel - 100.0) <= 3.0);
}

TEST_CASE("dense block matching ranges a close object within five percent") {
  SceneConfig s = demo_scene();
  s.objects.push_back(object_at(20, 0, 1, 3));  // d = 30
  const auto run = make_synthetic_frames(s, 2);
  auto cfg = demo_config(s);
  cfg.method = DepthMethod::kStereoBm;
  const auto res = run_pipeline(cfg, run.frames);
  REQUIRE(res.depth.size() == 2);
  for (const auto& r : res.depth) {
    REQUIRE(r.valid);
    REQUIRE(std::abs(r.disparity - 30.0) <= 1.5);
    REQUIRE(std::abs(r.z_fused - 20.0) <= 1.0);
  }
  for (const auto& o : res.objects) {
    REQUIRE(o.obj.kind == ObjectKind::kClose);
    REQUIRE(o.obj.n_blocks_used > 0);
  }
}

TEST_CASE("pipeline output is bit-identical across worker counts") {
  SceneConfig s = demo_scene();
  s.objects.push_back(object_at(100, 0, 1, 3));
  s.objects.push_back(object_at(22, -1, 2, 4));
  const auto run = make_synthetic_frames(s, 4);

  auto cfg1 = demo_config(s);
  cfg1.workers = 1;
  auto cfg4 = demo_config(s);
  cfg4.workers = 4;
  const auto r1 = run_pipeline(cfg1, run.frames);
  const auto r4 = run_pipeline(cfg4, run.frames);

  REQUIRE(r1.depth.size() == r4.depth.size());
  for (std::size_t i = 0; i < r1.depth.size(); ++i) {
    const auto& a = r1.depth[i];
    const auto& b = r4.depth[i];
    REQUIRE(a.det_id == b.det_id);
    REQUIRE(a.valid == b.valid);
    // exact: identical arithmetic must run regardless of thread count
    REQUIRE((a.disparity == b.disparity ||
             (std::isnan(a.disparity) && std::isnan(b.disparity))));
    REQUIRE((a.z_fused == b.z_fused ||
             (std::isnan(a.z_fused) && std::isnan(b.z_fused))));
  }
  REQUIRE(r1.objects.size() == r4.objects.size());
  for (std::size_t i = 0; i < r1.objects.size(); ++i) {
    REQUIRE(r1.objects[i].obj.disparity == r4.objects[i].obj.disparity);
    REQUIRE(r1.objects[i].obj.valid == r4.objects[i].obj.valid);
  }
  REQUIRE(r1.refiner_log.size() == r4.refiner_log.size());
  for (std::size_t i = 0; i < r1.refiner_log.size(); ++i) {
    REQUIRE(r1.refiner_log[i].rect_delta == r4.refiner_log[i].rect_delta);
    REQUIRE(r1.refiner_log[i].obj_offset == r4.refiner_log[i].obj_offset);
  }
}

TEST_CASE("a synthetic run survives the directory round-trip") {
  SceneConfig s = demo_scene();
  s.objects.push_back(object_at(50, 1, 1, 3));
  s.radar_sigma = 0.2;
  s.ego_yaw_rate = 0.01;
  const auto run = make_synthetic_frames(s, 3);
  TempDir tmp("ranger_run_roundtrip");
  save_synthetic_run(run, s, tmp.path.string());

  const auto frames = load_run_directory(tmp.path.string());
  REQUIRE(frames.size() == 3);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const auto& a = run.frames[i];
    const auto& b = frames[i];
    REQUIRE(b.frame_id == a.frame_id);
    REQUIRE(b.left.data == a.left.data);
    REQUIRE(b.right.data == a.right.data);
    REQUIRE(b.detections.size() == a.detections.size());
    for (std::size_t j = 0; j < a.detections.size(); ++j) {
      REQUIRE(b.detections[j].id == a.detections[j].id);
      REQUIRE(std::abs(b.detections[j].cx - a.detections[j].cx) < 1e-5);
      REQUIRE(std::abs(b.detections[j].w - a.detections[j].w) < 1e-5);
    }
    REQUIRE(b.radar.size() == a.radar.size());
    for (std::size_t j = 0; j < a.radar.size(); ++j)
      REQUIRE(std::abs(b.radar[j].position.x - a.radar[j].position.x) < 1e-5);
    REQUIRE(std::abs(b.ego.speed - a.ego.speed) < 1e-9);
    REQUIRE(std::abs(b.ego.yaw_rate - a.ego.yaw_rate) < 1e-9);
  }
  // the truth table alongside it reloads too
  const auto truth = load_truth_records(tmp.path.string() + "/truth.txt");
  REQUIRE(truth.size() == 3);
  REQUIRE(truth[0].obj_id == 1);
  REQUIRE(std::abs(truth[0].disparity - 12.0) < 1e-5);

  // and the loaded frames drive the pipeline end to end
  const auto cfg = demo_config(s);
  const auto res = run_pipeline(cfg, frames);
  REQUIRE(res.depth.size() == 3);
}

TEST_CASE("a missing right image fails loudly with its frame id") {
  TempDir tmp("ranger_missing_right");
  GrayImage img(16, 16);
  save_pgm(img, tmp.path.string() + "/" + frame_image_name("left", 0));
  try {
    load_run_directory(tmp.path.string());
    FAIL("expected a missing-image error");
  } catch (const std::runtime_error& e) {
    REQUIRE(std::string(e.what()).find("frame 0") != std::string::npos);
  }
}

TEST_CASE("mismatched image sizes fail loudly with the frame id") {
  auto cfg = demo_config(demo_scene());
  FrameInput f;
  f.frame_id = 4;
  f.left = GrayImage(32, 32);
  f.right = GrayImage(16, 32);
  try {
    run_pipeline(cfg, {f});
    FAIL("expected a dimension error");
  } catch (const std::runtime_error& e) {
    REQUIRE(std::string(e.what()).find("frame 4") != std::string::npos);
  }
}
