#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ranger/detection.hpp"
#include "ranger/geometry.hpp"
#include "ranger/image.hpp"

namespace ranger {

struct RadarDetection {
  Vec3 position;  // vehicle frame, m
  Vec3 extent;    // m
  int id = -1;
};

struct SceneObject {
  int id = 0;
  Vec3 position;  // vehicle frame, m
  double width_m = 2.0, height_m = 1.6, depth_m = 4.0;
  std::uint64_t texture_seed = 1;
  Vec3 velocity;  // m/s, vehicle frame
  double contrast = 60;
  double disparity_ramp = 0;  // px of extra disparity per px across the face
  int class_id = 0;
};

struct SceneConfig {
  StereoCalibration calib;
  int width = 640, height = 400;
  std::uint64_t background_seed = 7;
  double background_contrast = 40;
  int vertical_offset_px = 0;    // right-image content moves down by this
  double disparity_bias_px = 0;  // added to every rendered shift, not to truth
  double gain = 1, rad_bias = 0, gamma = 1;  // right radiometric map
  double noise_sigma = 0;  // intensity units, both images
  double radar_sigma = 0;  // m
  std::uint64_t seed = 1;
  int texture_quant = 1;      // texture value step; >1 survives byte remaps
  double texture_cell_px = 6  ;
  double ego_speed = 0;     // m/s, constant over the run
  double ego_yaw_rate = 0;  // rad/s
  std::vector<SceneObject> objects;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Deterministic value-noise field, evaluable at fractional coordinates, so a
/// sub-pixel shifted resample of the same field is exact.
struct ValueNoise {
  std::uint64_t seed;
  double cell;
  double contrast;
  int quant;

  double lattice(long ix, long iy) const {
    const std::uint64_t h =
        splitmix64(seed ^ splitmix64(std::uint64_t(ix) * 0x100000001B3ull ^
                                     std::uint64_t(iy)));
    return double(h >> 11) * 0x1.0p-53;  // [0,1)
  }

  double sample(double x, double y) const {
    const double gx = x / cell, gy = y / cell;
    const long ix = long(std::floor(gx)), iy = long(std::floor(gy));
    const double fx = gx - ix, fy = gy - iy;
    const double v0 = lattice(ix, iy) * (1 - fx) + lattice(ix + 1, iy) * fx;
    const double v1 = lattice(ix, iy + 1) * (1 - fx) + lattice(ix + 1, iy + 1) * fx;
    const double v = v0 * (1 - fy) + v1 * fy;
    double t = 128.0 + contrast * (2.0 * v - 1.0);
    if (quant > 1) t = std::round(t / quant) * quant;
    return std::clamp(t, 0.0, 255.0);
  }
};

struct ProjectedObject {
  double u0, u1, v0, v1;  // left-image box, px
  double u_center;
  double z_cam;
  double disparity;  // at the box center
};

inline ProjectedObject project_object(const SceneObject& o,
                                      const StereoCalibration& c) {
  const Vec3 p = imu_to_cam(o.position, c);
  if (p.z <= 0)
    throw std::invalid_argument("render: object behind the camera");
  ProjectedObject pr;
  pr.z_cam = p.z;
  pr.u0 = c.cx + c.f * (p.x - o.width_m / 2) / p.z;
  pr.u1 = c.cx + c.f * (p.x + o.width_m / 2) / p.z;
  pr.v0 = c.cy + c.f * (p.y - o.height_m / 2) / p.z;
  pr.v1 = c.cy + c.f * (p.y + o.height_m / 2) / p.z;
  pr.u_center = c.cx + c.f * p.x / p.z;
  pr.disparity = c.f * c.b / p.z;
  return pr;
}

}  // namespace detail

struct ObjectTruth {
  int id = 0;
  double disparity = 0;  // at the box center
  double z_cam = 0;
  Vec3 position;  // vehicle frame
};

struct RenderResult {
  GrayImage left, right;
  std::vector<double> true_disparity;  // per left pixel; 0 = background
  std::vector<int> object_id;          // per left pixel; -1 = background
  std::vector<ObjectTruth> objects;

  double disparity_at(int x, int y) const {
    return true_disparity[std::size_t(y) * left.width + x];
  }
  int id_at(int x, int y) const {
    return object_id[std::size_t(y) * left.width + x];
  }
};

/// Renders the rectified pair plus exact ground truth. Objects are textured
/// fronto-parallel rectangles drawn far-to-near; each right-image column is
/// the same texture field resampled at u + d (+ configured bias), which keeps
/// fractional true disparities exact. The right image then gets the
/// radiometric map, the injected vertical shift, and additive noise.
inline RenderResult render_stereo_pair(const SceneConfig& cfg) {
  if (cfg.width < 8 || cfg.height < 8)
    throw std::invalid_argument("render: image too small");
  if (cfg.gamma <= 0) throw std::invalid_argument("render: gamma must be positive");
  const int w = cfg.width, h = cfg.height;
  RenderResult out;
  out.left = GrayImage(w, h);
  out.right = GrayImage(w, h);
  out.true_disparity.assign(std::size_t(w) * h, 0.0);
  out.object_id.assign(std::size_t(w) * h, -1);

  const detail::ValueNoise bg{cfg.background_seed, cfg.texture_cell_px,
                              cfg.background_contrast, cfg.texture_quant};
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      out.left.at(x, y) = std::uint8_t(std::lround(bg.sample(x, y)));
      out.right.at(x, y) =
          std::uint8_t(std::lround(bg.sample(x + cfg.disparity_bias_px, y)));
    }

  // far to near, so nearer objects overwrite (true occlusion)
  std::vector<int> order(cfg.objects.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = int(i);
  std::vector<detail::ProjectedObject> proj;
  proj.reserve(cfg.objects.size());
  for (const auto& o : cfg.objects) proj.push_back(detail::project_object(o, cfg.calib));
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (proj[a].z_cam != proj[b].z_cam) return proj[a].z_cam > proj[b].z_cam;
    return cfg.objects[a].id < cfg.objects[b].id;
  });

  for (int oi : order) {
    const auto& o = cfg.objects[oi];
    const auto& pr = proj[oi];
    if (std::abs(o.disparity_ramp) >= 1)
      throw std::invalid_argument("render: |disparity_ramp| must be < 1");
    const detail::ValueNoise tex{o.texture_seed, cfg.texture_cell_px, o.contrast,
                                 cfg.texture_quant};
    out.objects.push_back({o.id, pr.disparity, pr.z_cam, o.position});

    const int ly0 = std::max(0, int(std::ceil(pr.v0)));
    const int ly1 = std::min(h - 1, int(std::floor(pr.v1)));
    const int lx0 = std::max(0, int(std::ceil(pr.u0)));
    const int lx1 = std::min(w - 1, int(std::floor(pr.u1)));
    for (int y = ly0; y <= ly1; ++y)
      for (int x = lx0; x <= lx1; ++x) {
        out.left.at(x, y) = std::uint8_t(std::lround(tex.sample(x - pr.u0, y - pr.v0)));
        const double d = pr.disparity + o.disparity_ramp * (x - pr.u_center);
        out.true_disparity[std::size_t(y) * w + x] = d;
        out.object_id[std::size_t(y) * w + x] = o.id;
      }

    // right-image span: u_r = u - shift(u), shift(u) = d(u) + bias
    const double k = 1.0 - o.disparity_ramp;
    const double c0 = pr.disparity + cfg.disparity_bias_px -
                      o.disparity_ramp * pr.u_center;  // shift(u) = c0 + ramp*u
    const double ru0 = pr.u0 * k - c0;
    const double ru1 = pr.u1 * k - c0;
    const int rx0 = std::max(0, int(std::ceil(std::min(ru0, ru1))));
    const int rx1 = std::min(w - 1, int(std::floor(std::max(ru0, ru1))));
    for (int y = ly0; y <= ly1; ++y)
      for (int xr = rx0; xr <= rx1; ++xr) {
        const double u = (xr + c0) / k;  // left-image column seen here
        if (u < pr.u0 || u > pr.u1) continue;
        out.right.at(xr, y) =
            std::uint8_t(std::lround(tex.sample(u - pr.u0, y - pr.v0)));
      }
  }

  // radiometric map, then vertical shift, then noise
  if (cfg.gain != 1 || cfg.rad_bias != 0 || cfg.gamma != 1) {
    for (auto& v : out.right.data) {
      const double mapped =
          cfg.gain * std::pow(v / 255.0, cfg.gamma) * 255.0 + cfg.rad_bias;
      v = std::uint8_t(std::clamp<long>(std::lround(mapped), 0, 255));
    }
  }
  if (cfg.vertical_offset_px != 0)
    out.right = shift_vertical(out.right, cfg.vertical_offset_px);
  if (cfg.noise_sigma > 0) {
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> n(0.0, cfg.noise_sigma);
    for (auto& v : out.left.data)
      v = std::uint8_t(std::clamp<long>(std::lround(v + n(rng)), 0, 255));
    for (auto& v : out.right.data)
      v = std::uint8_t(std::clamp<long>(std::lround(v + n(rng)), 0, 255));
  }
  return out;
}

/// One radar return per object: true position plus isotropic Gaussian noise,
/// extent copied from the object size. Deterministic per scene seed.
inline std::vector<RadarDetection> simulate_radar(const SceneConfig& cfg) {
  std::mt19937_64 rng(detail::splitmix64(cfg.seed ^ 0x5244524Aull));
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<RadarDetection> out;
  out.reserve(cfg.objects.size());
  for (const auto& o : cfg.objects) {
    RadarDetection r;
    r.id = o.id;
    r.position = o.position;
    if (cfg.radar_sigma > 0)
      r.position = r.position + cfg.radar_sigma * Vec3{n(rng), n(rng), n(rng)};
    r.extent = {o.depth_m, o.width_m, o.height_m};  // vehicle frame: x fwd, y left
    out.push_back(r);
  }
  return out;
}

/// Projected 2-D boxes, clipped to the frame, normalized; ids track objects.
/// Objects entirely off-frame or behind the camera yield no detection.
inline std::vector<Detection> ground_truth_detections(const SceneConfig& cfg) {
  std::vector<Detection> out;
  for (const auto& o : cfg.objects) {
    const Vec3 p = imu_to_cam(o.position, cfg.calib);
    if (p.z <= 0) continue;
    const auto pr = detail::project_object(o, cfg.calib);
    const double x0 = std::max(0.0, pr.u0 / cfg.width);
    const double x1 = std::min(1.0, pr.u1 / cfg.width);
    const double y0 = std::max(0.0, pr.v0 / cfg.height);
    const double y1 = std::min(1.0, pr.v1 / cfg.height);
    if (x1 - x0 <= 0 || y1 - y0 <= 0) continue;
    Detection d;
    d.cx = (x0 + x1) / 2;
    d.cy = (y0 + y1) / 2;
    d.w = x1 - x0;
    d.h = y1 - y0;
    d.id = o.id;
    d.class_id = o.class_id;
    out.push_back(d);
  }
  return out;
}

/// Deterministic unit-norm appearance feature per object id.
inline std::vector<double> object_feature(int object_id, int dims = 8) {
  std::vector<double> f(dims);
  double norm2 = 0;
  for (int i = 0; i < dims; ++i) {
    const std::uint64_t h = detail::splitmix64(std::uint64_t(object_id) * 1315423911ull + i);
    f[i] = double(h >> 11) * 0x1.0p-53 - 0.5;
    norm2 += f[i] * f[i];
  }
  const double inv = norm2 > 0 ? 1.0 / std::sqrt(norm2) : 0.0;
  for (auto& v : f) v *= inv;
  return f;
}

inline void advance_scene(SceneConfig& cfg, double dt) {
  for (auto& o : cfg.objects) o.position = o.position + dt * o.velocity;
}

inline void save_scene(const SceneConfig& cfg, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("save_scene: cannot open " + path);
  f.precision(17);
  f << "width " << cfg.width << "\nheight " << cfg.height << "\nf " << cfg.calib.f
    << "\nb " << cfg.calib.b << "\ncx " << cfg.calib.cx << "\ncy " << cfg.calib.cy
    << "\nh_cam " << cfg.calib.h_cam << "\nseed " << cfg.seed << "\nbackground_seed "
    << cfg.background_seed << "\nbackground_contrast " << cfg.background_contrast
    << "\nvertical_offset " << cfg.vertical_offset_px << "\ndisparity_bias "
    << cfg.disparity_bias_px << "\ngain " << cfg.gain << "\nrad_bias " << cfg.rad_bias
    << "\ngamma " << cfg.gamma << "\nnoise_sigma " << cfg.noise_sigma
    << "\nradar_sigma " << cfg.radar_sigma << "\ntexture_quant " << cfg.texture_quant
    << "\ntexture_cell " << cfg.texture_cell_px << "\nego_speed " << cfg.ego_speed
    << "\nego_yaw_rate " << cfg.ego_yaw_rate << "\n";
  for (const auto& o : cfg.objects)
    f << "object " << o.id << ' ' << o.position.x << ' ' << o.position.y << ' '
      << o.position.z << ' ' << o.width_m << ' ' << o.height_m << ' ' << o.depth_m
      << ' ' << o.velocity.x << ' ' << o.velocity.y << ' ' << o.velocity.z << ' '
      << o.texture_seed << ' ' << o.contrast << ' ' << o.disparity_ramp << ' '
      << o.class_id << '\n';
}

inline SceneConfig load_scene(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("load_scene: cannot open " + path);
  SceneConfig cfg;
  double fv = 2000, b = 0.3, cx = 0, cy = 0, h_cam = 1.5;
  bool have_c = false;
  std::string line;
  while (std::getline(f, line)) {
    std::istringstream ss(line);
    std::string key;
    if (!(ss >> key) || key.empty() || key[0] == '#') continue;
    if (key == "width") ss >> cfg.width;
    else if (key == "height") ss >> cfg.height;
    else if (key == "f") { ss >> fv; have_c = true; }
    else if (key == "b") ss >> b;
    else if (key == "cx") ss >> cx;
    else if (key == "cy") ss >> cy;
    else if (key == "h_cam") ss >> h_cam;
    else if (key == "seed") ss >> cfg.seed;
    else if (key == "background_seed") ss >> cfg.background_seed;
    else if (key == "background_contrast") ss >> cfg.background_contrast;
    else if (key == "vertical_offset") ss >> cfg.vertical_offset_px;
    else if (key == "disparity_bias") ss >> cfg.disparity_bias_px;
    else if (key == "gain") ss >> cfg.gain;
    else if (key == "rad_bias") ss >> cfg.rad_bias;
    else if (key == "gamma") ss >> cfg.gamma;
    else if (key == "noise_sigma") ss >> cfg.noise_sigma;
    else if (key == "radar_sigma") ss >> cfg.radar_sigma;
    else if (key == "texture_quant") ss >> cfg.texture_quant;
    else if (key == "texture_cell") ss >> cfg.texture_cell_px;
    else if (key == "ego_speed") ss >> cfg.ego_speed;
    else if (key == "ego_yaw_rate") ss >> cfg.ego_yaw_rate;
    else if (key == "object") {
      SceneObject o;
      ss >> o.id >> o.position.x >> o.position.y >> o.position.z >> o.width_m >>
          o.height_m >> o.depth_m >> o.velocity.x >> o.velocity.y >> o.velocity.z >>
          o.texture_seed >> o.contrast >> o.disparity_ramp >> o.class_id;
      cfg.objects.push_back(o);
    }
    if (ss.fail()) throw std::runtime_error("load_scene: bad line: " + line);
  }
  if (!have_c) throw std::runtime_error("load_scene: missing focal length");
  cfg.calib = make_calibration(fv, b, cx == 0 ? cfg.width / 2.0 : cx,
                               cy == 0 ? cfg.height / 2.0 : cy, h_cam);
  return cfg;
}

}  // namespace ranger
