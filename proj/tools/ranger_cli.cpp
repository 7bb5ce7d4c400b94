#include <climits>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "ranger/eval.hpp"
#include "ranger/pipeline.hpp"

// Command-line front end: `synth` renders a scene into a run directory,
// `run` executes the pipeline over one, `eval` scores the output against
// truth, `dump-disparity` writes a dense map as a debug PGM.

namespace {

using nlohmann::json;

ranger::SceneConfig default_demo_scene() {
  ranger::SceneConfig s;
  s.calib = ranger::make_calibration(2000, 0.30, s.width / 2.0, s.height / 2.0, 1.5);
  ranger::SceneObject car;
  car.id = 1;
  car.position = {30, 0, car.height_m / 2};  // resting on the road plane
  car.texture_seed = 11;
  s.objects.push_back(car);
  ranger::SceneObject van;
  van.id = 2;
  van.width_m = 2.2;
  van.height_m = 2.0;
  van.position = {60, 4, van.height_m / 2};
  van.texture_seed = 12;
  s.objects.push_back(van);
  ranger::SceneObject far_car;
  far_car.id = 3;
  // two lanes over, so the near car's box does not swallow this one
  far_car.position = {120, -6, far_car.height_m / 2};
  far_car.texture_seed = 13;
  s.objects.push_back(far_car);
  return s;
}

void apply_json(const json& j, ranger::RangerConfig& c) {
  c.tau_s = j.value("tau_s", c.tau_s);
  c.close_scale = j.value("close_scale", c.close_scale);
  c.grid_side_points = j.value("grid_side_points", c.grid_side_points);
  c.max_total_points = j.value("max_total_points", c.max_total_points);
  c.close_block_side_points =
      j.value("close_block_side_points", c.close_block_side_points);
  c.tau_d = j.value("tau_d", c.tau_d);
  c.n_min = j.value("n_min", c.n_min);
  c.tau_v = j.value("tau_v", c.tau_v);
  c.max_objects = j.value("max_objects", c.max_objects);
  c.dx_max_far = j.value("dx_max_far", c.dx_max_far);
  c.dx_max_close = j.value("dx_max_close", c.dx_max_close);
}

void apply_json(const json& j, ranger::BmParams& c) {
  c.num_disparities = j.value("num_disparities", c.num_disparities);
  c.block_size = j.value("block_size", c.block_size);
  c.min_disparity = j.value("min_disparity", c.min_disparity);
  c.texture_threshold = j.value("texture_threshold", c.texture_threshold);
  c.uniqueness_ratio = j.value("uniqueness_ratio", c.uniqueness_ratio);
  c.downscale = j.value("downscale", c.downscale);
}

void apply_json(const json& j, ranger::SgmParams& c) {
  c.num_disparities = j.value("num_disparities", c.num_disparities);
  c.min_disparity = j.value("min_disparity", c.min_disparity);
  c.p1 = j.value("p1", c.p1);
  c.p2 = j.value("p2", c.p2);
}

void apply_json(const json& j, ranger::PipelineConfig& cfg) {
  if (j.contains("method"))
    cfg.method = ranger::depth_method_from_string(j["method"].get<std::string>());
  cfg.workers = j.value("workers", cfg.workers);
  cfg.fps = j.value("fps", cfg.fps);
  cfg.radar_refiner = j.value("radar_refiner", cfg.radar_refiner);
  cfg.object_refiner = j.value("object_refiner", cfg.object_refiner);
  cfg.sigma_obs2 = j.value("sigma_obs2", cfg.sigma_obs2);
  cfg.var_gamma = j.value("var_gamma", cfg.var_gamma);
  cfg.sigma_sys2 = j.value("sigma_sys2", cfg.sigma_sys2);
  cfg.sigma_x2 = j.value("sigma_x2", cfg.sigma_x2);
  cfg.sigma_y2 = j.value("sigma_y2", cfg.sigma_y2);
  cfg.tm_sigma_d2 = j.value("tm_sigma_d2", cfg.tm_sigma_d2);
  if (j.contains("ranger")) apply_json(j["ranger"], cfg.ranger);
  if (j.contains("bm")) apply_json(j["bm"], cfg.bm);
  if (j.contains("sgm")) apply_json(j["sgm"], cfg.sgm);
  if (j.contains("rect")) {
    const json& r = j["rect"];
    cfg.rect.enabled = r.value("enabled", cfg.rect.enabled);
    cfg.rect.delta_min = r.value("delta_min", cfg.rect.delta_min);
    cfg.rect.delta_max = r.value("delta_max", cfg.rect.delta_max);
    cfg.rect.window = r.value("window", cfg.rect.window);
    cfg.rect.rate_limit = r.value("rate_limit", cfg.rect.rate_limit);
    if (r.contains("bm")) apply_json(r["bm"], cfg.rect.bm);
  }
  if (j.contains("class_width_m")) {
    cfg.class_width_m.clear();
    for (const auto& [k, v] : j["class_width_m"].items())
      cfg.class_width_m[std::stoi(k)] = v.get<double>();
  }
}

int cmd_synth(const std::string& scene_path, const std::string& out_dir,
              int frames, double dt, long seed, int voff, double bias,
              double noise, double radar_sigma) {
  ranger::SceneConfig scene =
      scene_path.empty() ? default_demo_scene() : ranger::load_scene(scene_path);
  if (seed >= 0) scene.seed = std::uint64_t(seed);
  if (voff != INT_MIN) scene.vertical_offset_px = voff;
  if (bias == bias) scene.disparity_bias_px = bias;  // NaN = not given
  if (noise == noise) scene.noise_sigma = noise;
  if (radar_sigma == radar_sigma) scene.radar_sigma = radar_sigma;
  const auto run = ranger::make_synthetic_frames(scene, frames, dt);
  ranger::save_synthetic_run(run, scene, out_dir);
  std::printf("wrote %d frames to %s\n", int(run.frames.size()), out_dir.c_str());
  return 0;
}

int cmd_run(const std::string& in_dir, std::string out_dir,
            const std::string& config_path, const std::string& method,
            int workers, double fps, bool no_rect, bool no_radar, bool no_obj) {
  ranger::PipelineConfig cfg;
  if (!config_path.empty()) {
    std::ifstream f(config_path);
    if (!f) throw std::runtime_error("cannot open config " + config_path);
    json j;
    f >> j;
    apply_json(j, cfg);
  }
  // flags take precedence over the config file
  if (!method.empty()) cfg.method = ranger::depth_method_from_string(method);
  if (workers > 0) cfg.workers = workers;
  if (fps > 0) cfg.fps = fps;
  if (no_rect) cfg.rect.enabled = false;
  if (no_radar) cfg.radar_refiner = false;
  if (no_obj) cfg.object_refiner = false;
  cfg.calib = ranger::load_calibration(in_dir + "/calib.txt");

  if (out_dir.empty()) out_dir = in_dir + "/out";
  const auto frames = ranger::load_run_directory(in_dir);
  const auto res = ranger::run_pipeline(cfg, frames);
  ranger::save_pipeline_outputs(res, out_dir);
  std::printf("processed %d frames: %d object records, %d track records -> %s\n",
              int(frames.size()), int(res.objects.size()), int(res.tracks.size()),
              out_dir.c_str());
  return 0;
}

int cmd_eval(const std::string& run_dir, const std::string& out_dir) {
  const auto rep = ranger::evaluate_run(run_dir, out_dir);
  const std::string text = ranger::eval_report_text(rep);
  std::ofstream(out_dir + "/report.txt") << text;
  std::ofstream(out_dir + "/metrics.json") << ranger::eval_report_json(rep).dump(2)
                                           << '\n';
  std::cout << text;
  return 0;
}

int cmd_dump(const std::string& in_dir, int frame, const std::string& method,
             const std::string& config_path, const std::string& out_path,
             int workers) {
  ranger::PipelineConfig cfg;
  if (!config_path.empty()) {
    std::ifstream f(config_path);
    if (!f) throw std::runtime_error("cannot open config " + config_path);
    json j;
    f >> j;
    apply_json(j, cfg);
  }
  const auto left =
      ranger::load_pgm(in_dir + "/" + ranger::frame_image_name("left", frame));
  const auto right =
      ranger::load_pgm(in_dir + "/" + ranger::frame_image_name("right", frame));
  ranger::DisparityMap map;
  if (method == "STEREO_SGM")
    map = ranger::sgm_disparity(left, right, cfg.sgm, workers);
  else
    map = ranger::bm_disparity(left, right, cfg.bm, workers);
  ranger::save_disparity_pgm(map, out_path);
  std::printf("wrote %s\n", out_path.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"object-centric stereo ranging pipeline"};
  app.require_subcommand(1);

  auto* synth = app.add_subcommand("synth", "render a synthetic scene run");
  std::string sy_scene, sy_out;
  int sy_frames = 10, sy_voff = INT_MIN;
  double sy_dt = 0.1;
  long sy_seed = -1;
  double sy_bias = NAN, sy_noise = NAN, sy_radar_sigma = NAN;
  synth->add_option("--scene", sy_scene, "scene description file");
  synth->add_option("--out", sy_out, "run directory to create")->required();
  synth->add_option("--frames", sy_frames, "number of frames");
  synth->add_option("--dt", sy_dt, "frame interval, s");
  synth->add_option("--seed", sy_seed, "override scene seed");
  synth->add_option("--vertical-offset", sy_voff,
                    "right-image vertical offset, px");
  synth->add_option("--disparity-bias", sy_bias, "rendered disparity bias, px");
  synth->add_option("--noise", sy_noise, "additive noise sigma");
  synth->add_option("--radar-sigma", sy_radar_sigma, "radar position noise, m");

  auto* run = app.add_subcommand("run", "execute the pipeline on a run directory");
  std::string r_in, r_out, r_config, r_method;
  int r_workers = 0;
  double r_fps = 0;
  bool r_no_rect = false, r_no_radar = false, r_no_obj = false;
  run->add_option("--in", r_in, "run directory")->required();
  run->add_option("--out", r_out, "output directory (default <in>/out)");
  run->add_option("--config", r_config, "pipeline config JSON");
  run->add_option("--method", r_method,
                  "TEMPLATE_MATCHER | STEREO_BM | STEREO_SGM");
  run->add_option("--workers", r_workers, "worker threads");
  run->add_option("--fps", r_fps, "frame rate, Hz");
  run->add_flag("--no-rect", r_no_rect, "disable rectification refinement");
  run->add_flag("--no-radar-refiner", r_no_radar, "disable dense-map refinement");
  run->add_flag("--no-object-refiner", r_no_obj, "disable per-object refinement");

  auto* eval = app.add_subcommand("eval", "score pipeline output against truth");
  std::string e_run, e_out;
  eval->add_option("--run", e_run, "run directory with truth.txt")->required();
  eval->add_option("--out", e_out, "pipeline output directory")->required();

  auto* dump = app.add_subcommand("dump-disparity", "write a dense map as PGM");
  std::string d_in, d_method = "STEREO_BM", d_config, d_out;
  int d_frame = 0, d_workers = 1;
  dump->add_option("--in", d_in, "run directory")->required();
  dump->add_option("--frame", d_frame, "frame id");
  dump->add_option("--method", d_method, "STEREO_BM | STEREO_SGM");
  dump->add_option("--config", d_config, "pipeline config JSON");
  dump->add_option("--out", d_out, "output PGM path")->required();
  dump->add_option("--workers", d_workers, "worker threads");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed())
      return cmd_synth(sy_scene, sy_out, sy_frames, sy_dt, sy_seed, sy_voff,
                       sy_bias, sy_noise, sy_radar_sigma);
    if (run->parsed())
      return cmd_run(r_in, r_out, r_config, r_method, r_workers, r_fps,
                     r_no_rect, r_no_radar, r_no_obj);
    if (eval->parsed()) return cmd_eval(e_run, e_out);
    if (dump->parsed())
      return cmd_dump(d_in, d_frame, d_method, d_config, d_out, d_workers);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
