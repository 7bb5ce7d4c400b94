#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>

#include "ranger/synth.hpp"

using namespace ranger;

namespace {

SceneConfig base_scene() {
  SceneConfig s;
  s.calib = make_calibration(2000, 0.30, s.width / 2.0, s.height / 2.0, 1.5);
  return s;
}

SceneObject object_at(double z_fwd, double y_lat, int id, std::uint64_t seed) {
  SceneObject o;
  o.id = id;
  o.position = {z_fwd, y_lat, 0};
  o.texture_seed = seed;
  return o;
}

}  // namespace

TEST_CASE("an integer-disparity object renders as an exact column shift") {
  SceneConfig s = base_scene();
  s.objects.push_back(object_at(100, 0, 1, 3));  // d = 600/100 = 6
  const RenderResult r = render_stereo_pair(s);
  REQUIRE(r.objects.size() == 1);
  REQUIRE(r.objects[0].disparity == 6.0);
  int checked = 0;
  for (int y = 0; y < s.height; ++y)
    for (int x = 0; x < s.width; ++x) {
      if (r.id_at(x, y) != 1) continue;
      REQUIRE(r.disparity_at(x, y) == 6.0);
      const int xr = x - 6;
      if (xr >= 0) {
        REQUIRE(int(r.right.at(xr, y)) == int(r.left.at(x, y)));
        ++checked;
      }
    }
  REQUIRE(checked > 500);
  // zero-disparity background is identical between the two images
  REQUIRE(int(r.right.at(5, 5)) == int(r.left.at(5, 5)));
}

TEST_CASE("fractional disparities are carried exactly in the ground truth") {
  SceneConfig s = base_scene();
  s.objects.push_back(object_at(160, 0, 1, 3));  // d = 3.75
  const RenderResult r = render_stereo_pair(s);
  REQUIRE(r.objects[0].disparity == 3.75);
  REQUIRE(r.objects[0].z_cam == 160.0);
  bool any = false;
  for (int y = 0; y < s.height && !any; ++y)
    for (int x = 0; x < s.width && !any; ++x)
      if (r.id_at(x, y) == 1) {
        REQUIRE(r.disparity_at(x, y) == 3.75);
        any = true;
      }
  REQUIRE(any);
}

TEST_CASE("nearer objects paint over farther ones") {
  SceneConfig s = base_scene();
  s.objects.push_back(object_at(30, 0.4, 1, 3));   // near
  s.objects.push_back(object_at(60, -0.4, 2, 4));  // far, overlapping boxes
  const RenderResult r = render_stereo_pair(s);
  REQUIRE(r.objects.size() == 2);
  const double d_near = 600.0 / 30, d_far = 600.0 / 60;
  int n_near = 0, n_far = 0;
  for (int y = 0; y < s.height; ++y)
    for (int x = 0; x < s.width; ++x) {
      if (r.id_at(x, y) == 1) {
        REQUIRE(r.disparity_at(x, y) == d_near);
        ++n_near;
      } else if (r.id_at(x, y) == 2) {
        REQUIRE(r.disparity_at(x, y) == d_far);
        ++n_far;
      }
    }
  REQUIRE(n_near > 0);
  REQUIRE(n_far > 0);
  // inside both projected boxes the near object wins; far-only rows keep id 2
  REQUIRE(r.id_at(330, 260) == 1);
  REQUIRE(r.id_at(330, 230) == 2);
}

TEST_CASE("the radiometric map touches only the right image") {
  SceneConfig s = base_scene();
  s.objects.push_back(object_at(50, 0, 1, 3));
  const RenderResult plain = render_stereo_pair(s);
  s.gain = 1.15;
  s.rad_bias = -8;
  s.gamma = 1.2;
  const RenderResult mapped = render_stereo_pair(s);
  REQUIRE(mapped.left.data == plain.left.data);
  REQUIRE(mapped.right.data != plain.right.data);
}

TEST_CASE("the vertical offset shifts right-image content down") {
  SceneConfig s = base_scene();
  s.objects.push_back(object_at(50, 0, 1, 3));
  const RenderResult plain = render_stereo_pair(s);
  s.vertical_offset_px = 2;
  const RenderResult shifted = render_stereo_pair(s);
  REQUIRE(shifted.left.data == plain.left.data);
  for (int y = 2; y < s.height; ++y)
    for (int x = 0; x < s.width; x += 7)
      REQUIRE(int(shifted.right.at(x, y)) == int(plain.right.at(x, y - 2)));
}

TEST_CASE("noise is deterministic per seed and perturbs both images") {
  SceneConfig s = base_scene();
  s.objects.push_back(object_at(50, 0, 1, 3));
  const RenderResult clean = render_stereo_pair(s);
  s.noise_sigma = 2.0;
  const RenderResult a = render_stereo_pair(s);
  const RenderResult b = render_stereo_pair(s);
  REQUIRE(a.left.data == b.left.data);
  REQUIRE(a.right.data == b.right.data);
  REQUIRE(a.left.data != clean.left.data);
  s.seed += 1;
  const RenderResult c = render_stereo_pair(s);
  REQUIRE(c.left.data != a.left.data);
}

TEST_CASE("a strong per-face disparity ramp is rejected") {
  SceneConfig s = base_scene();
  auto o = object_at(50, 0, 1, 3);
  o.disparity_ramp = 1.0;
  s.objects.push_back(o);
  REQUIRE_THROWS_AS(render_stereo_pair(s), std::invalid_argument);
  REQUIRE_THROWS_AS(
      [] {
        SceneConfig t;
        t.width = 4;
        return render_stereo_pair(t);
      }(),
      std::invalid_argument);
}

TEST_CASE("radar returns are deterministic and exact at zero sigma") {
  SceneConfig s = base_scene();
  s.objects.push_back(object_at(40, 2, 7, 3));
  s.objects.push_back(object_at(80, -3, 9, 4));
  const auto r0 = simulate_radar(s);
  REQUIRE(r0.size() == 2);
  REQUIRE(r0[0].id == 7);
  REQUIRE(r0[1].id == 9);
  REQUIRE(r0[0].position.x == 40.0);
  REQUIRE(r0[0].position.y == 2.0);
  REQUIRE(r0[0].extent.x == 4.0);  // depth
  REQUIRE(r0[0].extent.y == 2.0);  // width
  REQUIRE(r0[0].extent.z == 1.6);  // height
  s.radar_sigma = 0.5;
  const auto ra = simulate_radar(s);
  const auto rb = simulate_radar(s);
  REQUIRE(ra[0].position.x == rb[0].position.x);
  REQUIRE(ra[1].position.y == rb[1].position.y);
  REQUIRE(ra[0].position.x != 40.0);
}

TEST_CASE("truth detections are normalized, clipped, and skip unseen objects") {
  SceneConfig s = base_scene();
  s.objects.push_back(object_at(50, 0, 1, 3));
  s.objects.push_back(object_at(-10, 0, 2, 4));   // behind the camera
  s.objects.push_back(object_at(20, 8, 3, 5));    // fully off-frame left
  s.objects.push_back(object_at(20, 2.3, 4, 6));  // partially off-frame
  const auto dets = ground_truth_detections(s);
  REQUIRE(dets.size() == 2);
  REQUIRE(dets[0].id == 1);
  REQUIRE(dets[1].id == 4);
  for (const auto& d : dets) {
    REQUIRE(d.cx - d.w / 2 >= 0.0);
    REQUIRE(d.cx + d.w / 2 <= 1.0);
    REQUIRE(d.cy - d.h / 2 >= 0.0);
    REQUIRE(d.cy + d.h / 2 <= 1.0);
  }
  // the clipped box hugs the left edge
  REQUIRE(dets[1].cx - dets[1].w / 2 == 0.0);
}

TEST_CASE("object appearance features are deterministic unit vectors") {
  const auto a = object_feature(3);
  const auto b = object_feature(3);
  const auto c = object_feature(4);
  REQUIRE(a == b);
  REQUIRE(a != c);
  double n2 = 0;
  for (double v : a) n2 += v * v;
  REQUIRE(std::abs(n2 - 1.0) < 1e-12);
  REQUIRE(object_feature(3, 12).size() == 12);
}

TEST_CASE("advancing the scene integrates object velocity") {
  SceneConfig s = base_scene();
  auto o = object_at(50, 1, 1, 3);
  o.velocity = {-2, 0.5, 0};
  s.objects.push_back(o);
  advance_scene(s, 0.5);
  REQUIRE(s.objects[0].position.x == 49.0);
  REQUIRE(s.objects[0].position.y == 1.25);
}

TEST_CASE("scene files round-trip every field") {
  SceneConfig s = base_scene();
  s.width = 512;
  s.height = 256;
  s.background_seed = 42;
  s.background_contrast = 33;
  s.vertical_offset_px = -2;
  s.disparity_bias_px = 0.5;
  s.gain = 1.1;
  s.rad_bias = 3;
  s.gamma = 0.9;
  s.noise_sigma = 1.5;
  s.radar_sigma = 0.25;
  s.seed = 99;
  s.texture_quant = 8;
  s.texture_cell_px = 5;
  s.ego_speed = 13.5;
  s.ego_yaw_rate = 0.02;
  auto o = object_at(44, -1, 6, 17);
  o.width_m = 2.2;
  o.height_m = 1.7;
  o.depth_m = 4.4;
  o.velocity = {-3, 0.25, 0};
  o.contrast = 55;
  o.disparity_ramp = 0.1;
  o.class_id = 1;
  s.objects.push_back(o);
  const std::string path = "synth_scene_roundtrip.txt";
  save_scene(s, path);
  const SceneConfig r = load_scene(path);
  std::remove(path.c_str());
  REQUIRE(r.width == s.width);
  REQUIRE(r.height == s.height);
  REQUIRE(r.calib.f == s.calib.f);
  REQUIRE(r.calib.b == s.calib.b);
  REQUIRE(r.background_seed == s.background_seed);
  REQUIRE(r.background_contrast == s.background_contrast);
  REQUIRE(r.vertical_offset_px == s.vertical_offset_px);
  REQUIRE(r.disparity_bias_px == s.disparity_bias_px);
  REQUIRE(r.gain == s.gain);
  REQUIRE(r.rad_bias == s.rad_bias);
  REQUIRE(r.gamma == s.gamma);
  REQUIRE(r.noise_sigma == s.noise_sigma);
  REQUIRE(r.radar_sigma == s.radar_sigma);
  REQUIRE(r.seed == s.seed);
  REQUIRE(r.texture_quant == s.texture_quant);
  REQUIRE(r.texture_cell_px == s.texture_cell_px);
  REQUIRE(r.ego_speed == s.ego_speed);
  REQUIRE(r.ego_yaw_rate == s.ego_yaw_rate);
  REQUIRE(r.objects.size() == 1);
  const auto& q = r.objects[0];
  REQUIRE(q.id == o.id);
  REQUIRE(q.position.x == o.position.x);
  REQUIRE(q.position.y == o.position.y);
  REQUIRE(q.width_m == o.width_m);
  REQUIRE(q.height_m == o.height_m);
  REQUIRE(q.depth_m == o.depth_m);
  REQUIRE(q.texture_seed == o.texture_seed);
  REQUIRE(q.velocity.x == o.velocity.x);
  REQUIRE(q.velocity.y == o.velocity.y);
  REQUIRE(q.contrast == o.contrast);
  REQUIRE(q.disparity_ramp == o.disparity_ramp);
  REQUIRE(q.class_id == o.class_id);
  REQUIRE_THROWS_AS(load_scene("no_such_scene.txt"), std::runtime_error);
}

TEST_CASE("a render is reproducible for a fixed configuration") {
  SceneConfig s = base_scene();
  s.objects.push_back(object_at(35, 0.5, 1, 3));
  s.noise_sigma = 1.0;
  const RenderResult a = render_stereo_pair(s);
  const RenderResult b = render_stereo_pair(s);
  REQUIRE(a.left.data == b.left.data);
  REQUIRE(a.right.data == b.right.data);
  REQUIRE(a.true_disparity == b.true_disparity);
  REQUIRE(a.object_id == b.object_id);
}
