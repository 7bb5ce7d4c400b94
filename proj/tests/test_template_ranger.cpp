#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "ranger/synth.hpp"
#include "ranger/template_match.hpp"

using namespace ranger;

namespace {

Detection det_at(double cx, double cy, double w, double h, int id) {
  Detection d;
  d.cx = cx;
  d.cy = cy;
  d.w = w;
  d.h = h;
  d.id = id;
  return d;
}

SceneConfig scene_with_object(double z_fwd, double y_lat = 0) {
  SceneConfig s;
  s.calib = make_calibration(2000, 0.30, s.width / 2.0, s.height / 2.0, 1.5);
  SceneObject o;
  o.id = 1;
  o.position = {z_fwd, y_lat, 0};
  o.texture_seed = 21;
  s.objects.push_back(o);
  return s;
}

}  // namespace

TEST_CASE("size threshold splits far from close strictly") {
  const int w = 1000, h = 1000;
  REQUIRE(classify_far_close(det_at(0.5, 0.5, 0.0479, 0.020, 1), w, h, 48) ==
          ObjectKind::kFar);
  REQUIRE(classify_far_close(det_at(0.5, 0.5, 0.048, 0.020, 1), w, h, 48) ==
          ObjectKind::kClose);
  // height alone can trip the threshold
  REQUIRE(classify_far_close(det_at(0.5, 0.5, 0.020, 0.048, 1), w, h, 48) ==
          ObjectKind::kClose);
}

TEST_CASE("an occluder must overlap and sit lower in the image") {
  std::vector<Detection> dets{det_at(0.5, 0.5, 0.2, 0.2, 1),
                              det_at(0.55, 0.58, 0.2, 0.2, 2),
                              det_at(0.9, 0.5, 0.1, 0.2, 3)};
  const auto occ = find_occluders(dets);
  REQUIRE(occ[0] == std::vector<int>{1});  // overlaps and bottom is lower
  REQUIRE(occ[1].empty());                 // nothing sits lower over it
  REQUIRE(occ[2].empty());                 // no overlap at all
}

TEST_CASE("equal bottom edges do not occlude each other") {
  std::vector<Detection> dets{det_at(0.5, 0.5, 0.2, 0.2, 1),
                              det_at(0.55, 0.5, 0.2, 0.2, 2)};
  const auto occ = find_occluders(dets);
  REQUIRE(occ[0].empty());
  REQUIRE(occ[1].empty());
}

TEST_CASE("selection ranks frontal boxes by area, then the rest by bottom edge") {
  RangerConfig cfg;
  std::vector<Detection> dets{
      det_at(0.5, 0.5, 0.10, 0.10, 1),   // frontal, area 0.01
      det_at(0.6, 0.5, 0.20, 0.20, 2),   // frontal, area 0.04
      det_at(0.9, 0.8, 0.10, 0.10, 3),   // edge, bottom 0.85
      det_at(0.1, 0.9, 0.10, 0.10, 4),   // edge, bottom 0.95
  };
  const auto sel = select_objects(dets, cfg);
  REQUIRE(sel == std::vector<int>{1, 0, 3, 2});
}

TEST_CASE("selection budget truncates after priority ordering") {
  RangerConfig cfg;
  cfg.max_objects = 2;
  std::vector<Detection> dets{
      det_at(0.5, 0.5, 0.10, 0.10, 1),
      det_at(0.6, 0.5, 0.20, 0.20, 2),
      det_at(0.9, 0.8, 0.10, 0.10, 3),
  };
  const auto sel = select_objects(dets, cfg);
  REQUIRE(sel == std::vector<int>{1, 0});
}

TEST_CASE("frontal tie on area resolves by detection id") {
  RangerConfig cfg;
  std::vector<Detection> dets{det_at(0.4, 0.4, 0.1, 0.1, 7),
                              det_at(0.6, 0.6, 0.1, 0.1, 2)};
  const auto sel = select_objects(dets, cfg);
  REQUIRE(sel == std::vector<int>{1, 0});  // same area: smaller id first
}

TEST_CASE("aggregation keeps the longest tight run and takes its median") {
  const auto r = aggregate_close_disparities({3.2, 3.0, 8.0, 3.1}, 1.0, 3);
  REQUIRE(r.valid);
  REQUIRE(r.run_length == 3);
  REQUIRE(r.disparity == 3.1);
}

TEST_CASE("aggregation gap at exactly tau_d splits the run") {
  const auto r = aggregate_close_disparities({1.0, 2.0, 3.0}, 1.0, 3);
  REQUIRE(!r.valid);  // every adjacent gap equals tau_d: runs of one
}

TEST_CASE("equal-length runs resolve toward the larger disparities") {
  const auto r = aggregate_close_disparities({1.0, 1.1, 5.0, 5.1}, 1.0, 2);
  REQUIRE(r.valid);
  REQUIRE(r.run_length == 2);
  REQUIRE(r.disparity == 5.1);  // run index len/2 = 1
}

TEST_CASE("aggregation needs at least n_min members") {
  REQUIRE(!aggregate_close_disparities({2.0, 2.1}, 1.0, 3).valid);
  REQUIRE(!aggregate_close_disparities({}, 1.0, 1).valid);
  const auto r = aggregate_close_disparities({2.0, 2.1, 2.2}, 1.0, 3);
  REQUIRE(r.valid);
  REQUIRE(r.disparity == 2.1);
}

TEST_CASE("even-length winning run reports the upper of the two middles") {
  const auto r = aggregate_close_disparities({4.0, 4.1, 4.2, 4.3}, 1.0, 2);
  REQUIRE(r.valid);
  REQUIRE(r.run_length == 4);
  REQUIRE(r.disparity == 4.2);  // index len/2 = 2
}

TEST_CASE("far sampling lays a cell-center grid capped by the point budget") {
  RangerConfig cfg;  // grid 8, cap sqrt(64) = 8
  const Detection d = det_at(0.5, 0.5, 0.04, 0.032, 1);  // 40x32 px at 1000x1000
  const auto blocks = sample_query_points(d, ObjectKind::kFar, {}, cfg, 1000, 1000);
  REQUIRE(blocks.size() == 1);
  REQUIRE(blocks[0].points.size() == 64);
  REQUIRE(blocks[0].dx_min == 0);
  REQUIRE(blocks[0].dx_max == cfg.dx_max_far);
  REQUIRE(blocks[0].dy_min == -1);
  REQUIRE(blocks[0].dy_max == 1);
  // first point sits at the first cell center, rounded
  const PixelBox box = to_pixel_box(d, 1000, 1000);
  const int ex = int(std::lround(box.x0 + 0.5 * box.width() / 8));
  const int ey = int(std::lround(box.y0 + 0.5 * box.height() / 8));
  REQUIRE(blocks[0].points.front() == std::make_pair(ex, ey));
}

TEST_CASE("a small point budget shrinks the far grid") {
  RangerConfig cfg;
  cfg.max_total_points = 9;  // cap = 3 per side
  const Detection d = det_at(0.5, 0.5, 0.04, 0.032, 1);
  const auto blocks = sample_query_points(d, ObjectKind::kFar, {}, cfg, 1000, 1000);
  REQUIRE(blocks.size() == 1);
  REQUIRE(blocks[0].points.size() == 9);
}

TEST_CASE("occluded grid points drop; a fully covered block drops entirely") {
  RangerConfig cfg;
  const Detection d = det_at(0.5, 0.5, 0.04, 0.032, 1);  // box [480,520)x[484,516)
  // occluder over everything left of the last grid column (x centers 482.5..517.5)
  const PixelBox occ{480, 484, 516, 516};
  const auto blocks =
      sample_query_points(d, ObjectKind::kFar, {occ}, cfg, 1000, 1000);
  REQUIRE(blocks.size() == 1);
  REQUIRE(blocks[0].points.size() == 8);  // the surviving column
  for (const auto& [x, y] : blocks[0].points) REQUIRE(x == 518);
  const PixelBox full{0, 0, 1000, 1000};
  REQUIRE(sample_query_points(d, ObjectKind::kFar, {full}, cfg, 1000, 1000).empty());
}

TEST_CASE("close sampling splits the box into at-least-2x2 sub-blocks") {
  RangerConfig cfg;  // tau_s 48 -> target sub-block side 24 px
  // 100x60 px box at 1000x1000: cols = floor(100/24) = 4, rows = max(2, 2) = 2
  const Detection d = det_at(0.5, 0.5, 0.10, 0.06, 1);
  const auto blocks = sample_query_points(d, ObjectKind::kClose, {}, cfg, 1000, 1000);
  REQUIRE(blocks.size() == 8);
  for (const auto& b : blocks) {
    REQUIRE(b.points.size() == 25);  // 5x5 per sub-block
    REQUIRE(b.dx_max == (cfg.dx_max_close + cfg.close_scale - 1) / cfg.close_scale);
    // points live in the reduced raster
    for (const auto& [x, y] : b.points) {
      REQUIRE(x < 1000 / cfg.close_scale);
      REQUIRE(y < 1000 / cfg.close_scale);
    }
  }
}

TEST_CASE("a small box still gets the 2x2 sub-block minimum") {
  RangerConfig cfg;
  const Detection d = det_at(0.5, 0.5, 0.050, 0.050, 1);  // 50x50 px: close
  const auto blocks = sample_query_points(d, ObjectKind::kClose, {}, cfg, 1000, 1000);
  REQUIRE(blocks.size() == 4);
}

TEST_CASE("far object disparity is recovered within a quarter pixel") {
  SceneConfig s = scene_with_object(100);  // 40x32 px box, d = 6
  const RenderResult rr = render_stereo_pair(s);
  const auto dets = ground_truth_detections(s);
  REQUIRE(dets.size() == 1);
  RangerConfig cfg;
  RangerStats stats;
  const auto out = estimate_object_disparities(rr.left, rr.right, dets, cfg,
                                               nullptr, 1, &stats);
  REQUIRE(out.size() == 1);
  REQUIRE(out[0].kind == ObjectKind::kFar);
  REQUIRE(out[0].valid);
  REQUIRE(out[0].n_blocks_used == 1);
  REQUIRE(std::abs(out[0].disparity - 6.0) <= 0.25);
  REQUIRE(stats.n_far == 1);
  REQUIRE(stats.query_points <= stats.image_pixels / 20);  // sparse by design
}

TEST_CASE("close object disparity is recovered within a pixel") {
  SceneConfig s = scene_with_object(20);  // 200x160 px box, d = 30
  const RenderResult rr = render_stereo_pair(s);
  const auto dets = ground_truth_detections(s);
  REQUIRE(dets.size() == 1);
  RangerConfig cfg;
  const auto out = estimate_object_disparities(rr.left, rr.right, dets, cfg);
  REQUIRE(out.size() == 1);
  REQUIRE(out[0].kind == ObjectKind::kClose);
  REQUIRE(out[0].valid);
  REQUIRE(out[0].n_blocks_used >= cfg.n_min);
  REQUIRE(std::abs(out[0].disparity - 30.0) <= 1.0);
}

TEST_CASE("results come back in input order with matching ids") {
  SceneConfig s = scene_with_object(100, 0);
  SceneObject o2;
  o2.id = 9;
  o2.position = {90, 5, 0};
  o2.texture_seed = 33;
  s.objects.push_back(o2);
  const RenderResult rr = render_stereo_pair(s);
  auto dets = ground_truth_detections(s);
  REQUIRE(dets.size() == 2);
  RangerConfig cfg;
  const auto out = estimate_object_disparities(rr.left, rr.right, dets, cfg);
  REQUIRE(out.size() == 2);
  REQUIRE(out[0].det_id == dets[0].id);
  REQUIRE(out[1].det_id == dets[1].id);
}

TEST_CASE("roi-restricted census gives the same answer as a full-frame cache") {
  SceneConfig s = scene_with_object(100);
  SceneObject o2;
  o2.id = 2;
  o2.position = {18, 1.2, 0};
  o2.texture_seed = 5;
  s.objects.push_back(o2);
  const RenderResult rr = render_stereo_pair(s);
  const auto dets = ground_truth_detections(s);
  RangerConfig cfg;

  const auto roi_out = estimate_object_disparities(rr.left, rr.right, dets, cfg);

  CensusCache cache;
  cache.full_left = census_transform(rr.left);
  cache.full_right = census_transform(rr.right);
  cache.has_full = true;
  const int cw = rr.left.width / cfg.close_scale, ch = rr.left.height / cfg.close_scale;
  cache.scaled_left = census_transform(rr.left, cw, ch);
  cache.scaled_right = census_transform(rr.right, cw, ch);
  cache.has_scaled = true;
  const auto full_out =
      estimate_object_disparities(rr.left, rr.right, dets, cfg, &cache);

  REQUIRE(roi_out.size() == full_out.size());
  for (std::size_t i = 0; i < roi_out.size(); ++i) {
    REQUIRE(roi_out[i].det_id == full_out[i].det_id);
    REQUIRE(roi_out[i].valid == full_out[i].valid);
    REQUIRE(roi_out[i].disparity == full_out[i].disparity);
    REQUIRE(roi_out[i].n_blocks_used == full_out[i].n_blocks_used);
  }
}

TEST_CASE("object ranging is identical across worker counts") {
  SceneConfig s = scene_with_object(100);
  SceneObject o2;
  o2.id = 2;
  o2.position = {20, -1, 0};
  o2.texture_seed = 8;
  s.objects.push_back(o2);
  const RenderResult rr = render_stereo_pair(s);
  const auto dets = ground_truth_detections(s);
  RangerConfig cfg;
  const auto a = estimate_object_disparities(rr.left, rr.right, dets, cfg, nullptr, 1);
  const auto b = estimate_object_disparities(rr.left, rr.right, dets, cfg, nullptr, 4);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a[i].disparity == b[i].disparity);
    REQUIRE(a[i].valid == b[i].valid);
  }
}

TEST_CASE("empty detection list produces no output") {
  SceneConfig s = scene_with_object(100);
  const RenderResult rr = render_stereo_pair(s);
  RangerConfig cfg;
  REQUIRE(estimate_object_disparities(rr.left, rr.right, {}, cfg).empty());
}

TEST_CASE("config validation rejects nonsense") {
  RangerConfig cfg;
  cfg.tau_s = 0;
  REQUIRE_THROWS_AS(validate(cfg), std::invalid_argument);
  cfg = RangerConfig{};
  cfg.n_min = 0;
  REQUIRE_THROWS_AS(validate(cfg), std::invalid_argument);
  cfg = RangerConfig{};
  cfg.close_scale = 0;
  REQUIRE_THROWS_AS(validate(cfg), std::invalid_argument);
}
