#pragma once

#include <array>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ranger/detection.hpp"

namespace ranger {

struct Vec3 {
  double x = 0, y = 0, z = 0;
};

inline Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
inline Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
inline Vec3 operator*(double s, Vec3 v) { return {s * v.x, s * v.y, s * v.z}; }
inline double dot(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline double norm(Vec3 v) { return std::sqrt(dot(v, v)); }

struct Mat3 {
  // row-major
  std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

  double& operator()(int r, int c) { return m[r * 3 + c]; }
  double operator()(int r, int c) const { return m[r * 3 + c]; }

  static Mat3 identity() { return {}; }
  Mat3 transposed() const {
    Mat3 t;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) t(r, c) = (*this)(c, r);
    return t;
  }
};

inline Vec3 operator*(const Mat3& a, Vec3 v) {
  return {a(0, 0) * v.x + a(0, 1) * v.y + a(0, 2) * v.z,
          a(1, 0) * v.x + a(1, 1) * v.y + a(1, 2) * v.z,
          a(2, 0) * v.x + a(2, 1) * v.y + a(2, 2) * v.z};
}

inline Mat3 operator*(const Mat3& a, const Mat3& b) {
  Mat3 r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0;
      for (int k = 0; k < 3; ++k) s += a(i, k) * b(k, j);
      r(i, j) = s;
    }
  return r;
}

inline double det(const Mat3& a) {
  return a(0, 0) * (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1)) -
         a(0, 1) * (a(1, 0) * a(2, 2) - a(1, 2) * a(2, 0)) +
         a(0, 2) * (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0));
}

inline bool is_rotation(const Mat3& r, double tol = 1e-9) {
  const Mat3 rtr = r.transposed() * r;
  const Mat3 eye = Mat3::identity();
  for (int i = 0; i < 9; ++i)
    if (std::abs(rtr.m[i] - eye.m[i]) > tol) return false;
  return std::abs(det(r) - 1.0) <= tol;
}

struct Mat4 {
  std::array<double, 16> m{};  // row-major

  double& operator()(int r, int c) { return m[r * 4 + c]; }
  double operator()(int r, int c) const { return m[r * 4 + c]; }
};

inline std::array<double, 4> operator*(const Mat4& a, const std::array<double, 4>& v) {
  std::array<double, 4> r{};
  for (int i = 0; i < 4; ++i)
    for (int k = 0; k < 4; ++k) r[i] += a(i, k) * v[k];
  return r;
}

struct StereoCalibration {
  double f = 0;   // focal length, px
  double b = 0;   // baseline, m
  double cx = 0;  // principal point, px
  double cy = 0;
  Mat4 Q;            // disparity-to-depth reprojection
  Mat3 R;            // camera -> vehicle rotation
  Vec3 t;            // camera origin in the vehicle frame, m
  double h_cam = 0;  // camera height above ground, m
};

/// Camera axes (+X right, +Y down, +Z forward) mapped onto the vehicle frame
/// (+x forward, +y left, +z up) for a horizontal forward-looking camera.
inline Mat3 canonical_cam_to_vehicle_rotation() {
  Mat3 r;
  r.m = {0, 0, 1, -1, 0, 0, 0, -1, 0};
  return r;
}

/// Builds the rectified-pair reprojection matrix from pinhole parameters and
/// validates the calibration invariants.
inline StereoCalibration make_calibration(double f, double b, double cx, double cy,
                                          double h_cam, const Mat3& R, Vec3 t) {
  if (f <= 0 || b <= 0)
    throw std::invalid_argument("make_calibration: f and b must be positive");
  if (!is_rotation(R, 1e-6))
    throw std::invalid_argument("make_calibration: R is not a rotation");
  StereoCalibration c;
  c.f = f;
  c.b = b;
  c.cx = cx;
  c.cy = cy;
  c.h_cam = h_cam;
  c.R = R;
  c.t = t;
  c.Q.m = {1, 0, 0, -cx,  //
           0, 1, 0, -cy,  //
           0, 0, 0, f,    //
           0, 0, 1 / b, 0};
  return c;
}

inline StereoCalibration make_calibration(double f, double b, double cx, double cy,
                                          double h_cam) {
  return make_calibration(f, b, cx, cy, h_cam, canonical_cam_to_vehicle_rotation(),
                          Vec3{0, 0, h_cam});
}

inline double depth_from_disparity(double d, const StereoCalibration& c) {
  if (d <= 0) throw std::invalid_argument("depth_from_disparity: d must be positive");
  return c.f * c.b / d;
}

/// Homogeneous reprojection of an image point with disparity to a camera-frame
/// 3-D point: [X Y Z W]' = Q [u v d 1]', point = (X, Y, Z)/W.
inline Vec3 reproject(double u, double v, double d, const StereoCalibration& c) {
  const auto h = c.Q * std::array<double, 4>{u, v, d, 1.0};
  if (h[3] == 0.0) throw std::invalid_argument("reproject: degenerate point (W = 0)");
  return {h[0] / h[3], h[1] / h[3], h[2] / h[3]};
}

inline Vec3 cam_to_imu(Vec3 p, const StereoCalibration& c) { return c.R * p + c.t; }

inline Vec3 imu_to_cam(Vec3 p, const StereoCalibration& c) {
  return c.R.transposed() * (p - c.t);
}

/// Depth variance from disparity variance: sigma_Z^2 = Z^4/(f^2 b^2) * sigma_d^2.
inline double depth_variance(double z, double sigma_d2, const StereoCalibration& c) {
  const double z2 = z * z;
  return z2 * z2 / (c.f * c.f * c.b * c.b) * sigma_d2;
}

/// Disparity variance combining sampling noise, a consistency penalty between
/// the near-subset mean and the full-sample mean, and a systematic floor.
inline double dynamic_disparity_variance(const std::vector<double>& near_samples,
                                         const std::vector<double>& all_samples,
                                         double sigma_obs2, double gamma,
                                         double sigma_sys2) {
  if (near_samples.empty())
    throw std::invalid_argument("dynamic_disparity_variance: no near samples");
  const double mean_near =
      std::accumulate(near_samples.begin(), near_samples.end(), 0.0) /
      double(near_samples.size());
  const double mean_all =
      all_samples.empty()
          ? mean_near
          : std::accumulate(all_samples.begin(), all_samples.end(), 0.0) /
                double(all_samples.size());
  const double diff = mean_near - mean_all;
  return sigma_obs2 / double(near_samples.size()) + gamma * diff * diff + sigma_sys2;
}

/// Sigma = R diag(sx2, sy2, sz2) R'.
inline Mat3 rotate_covariance(const Mat3& r, double sx2, double sy2, double sz2) {
  Mat3 d;
  d.m = {sx2, 0, 0, 0, sy2, 0, 0, 0, sz2};
  return r * d * r.transposed();
}

enum class DepthSource { kStereo, kGpt, kSize };

struct DepthEstimate {
  Vec3 point_imu;
  Mat3 cov_imu{};    // zero for the monocular cues
  DepthSource source = DepthSource::kStereo;
  double disparity = 0;  // stereo only
  double z_cam = 0;      // camera-frame depth, m
  bool valid = true;
};

inline DepthEstimate make_stereo_estimate(double u, double v, double d,
                                          double sigma_d2, double sigma_x2,
                                          double sigma_y2,
                                          const StereoCalibration& c) {
  const Vec3 p_cam = reproject(u, v, d, c);
  DepthEstimate e;
  e.point_imu = cam_to_imu(p_cam, c);
  e.cov_imu = rotate_covariance(c.R, sigma_x2, sigma_y2,
                                depth_variance(p_cam.z, sigma_d2, c));
  e.source = DepthSource::kStereo;
  e.disparity = d;
  e.z_cam = p_cam.z;
  return e;
}

/// Flat-ground ray intersection at the box's bottom-center.
inline DepthEstimate ground_point_depth(const Detection& det,
                                        const StereoCalibration& c, int img_w,
                                        int img_h) {
  const double u = det.cx * img_w;
  const double v_bottom = (det.cy + det.h / 2) * img_h;
  if (v_bottom <= c.cy)
    throw std::invalid_argument("ground_point_depth: box bottom at or above horizon");
  const double z = c.h_cam * c.f / (v_bottom - c.cy);
  const Vec3 p_cam{(u - c.cx) * z / c.f, (v_bottom - c.cy) * z / c.f, z};
  DepthEstimate e;
  e.point_imu = cam_to_imu(p_cam, c);
  e.source = DepthSource::kGpt;
  e.z_cam = z;
  return e;
}

/// Depth from apparent width against a per-class metric width prior.
inline DepthEstimate size_based_depth(const Detection& det, double class_width_m,
                                      const StereoCalibration& c, int img_w,
                                      int img_h) {
  const double w_px = det.w * img_w;
  if (w_px <= 0) throw std::invalid_argument("size_based_depth: zero box width");
  const double z = c.f * class_width_m / w_px;
  const double u = det.cx * img_w;
  const double v = det.cy * img_h;
  const Vec3 p_cam{(u - c.cx) * z / c.f, (v - c.cy) * z / c.f, z};
  DepthEstimate e;
  e.point_imu = cam_to_imu(p_cam, c);
  e.source = DepthSource::kSize;
  e.z_cam = z;
  e.valid = z > 0;
  return e;
}

inline void save_calibration(const StereoCalibration& c, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("save_calibration: cannot open " + path);
  f.precision(17);
  f << "f " << c.f << "\nb " << c.b << "\ncx " << c.cx << "\ncy " << c.cy
    << "\nh_cam " << c.h_cam << "\nR";
  for (double v : c.R.m) f << ' ' << v;
  f << "\nt " << c.t.x << ' ' << c.t.y << ' ' << c.t.z << '\n';
}

inline StereoCalibration load_calibration(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("load_calibration: cannot open " + path);
  double fv = 0, b = 0, cx = 0, cy = 0, h_cam = 0;
  Mat3 r;
  Vec3 t;
  bool have_r = false, have_t = false;
  std::string line;
  while (std::getline(f, line)) {
    std::istringstream ss(line);
    std::string key;
    if (!(ss >> key) || key.empty() || key[0] == '#') continue;
    if (key == "f")
      ss >> fv;
    else if (key == "b")
      ss >> b;
    else if (key == "cx")
      ss >> cx;
    else if (key == "cy")
      ss >> cy;
    else if (key == "h_cam")
      ss >> h_cam;
    else if (key == "R") {
      for (double& v : r.m) ss >> v;
      have_r = true;
    } else if (key == "t") {
      ss >> t.x >> t.y >> t.z;
      have_t = true;
    }
    if (ss.fail()) throw std::runtime_error("load_calibration: bad line: " + line);
  }
  if (!have_r) r = canonical_cam_to_vehicle_rotation();
  if (!have_t) t = Vec3{0, 0, h_cam};
  return make_calibration(fv, b, cx, cy, h_cam, r, t);
}

}  // namespace ranger
