#pragma once

#include <cmath>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "ranger/io.hpp"

// Scoring against ground truth: per-range-bucket disparity MAE, depth
// relative error and valid rate, plus the per-frame refiner offset curves.

namespace ranger {

struct BucketMetrics {
  int count = 0;        // matched records whose truth falls in the bucket
  int n_valid = 0;      // records with a valid stereo disparity
  int n_depth = 0;      // records with a finite fused depth
  double disparity_mae = 0;
  double depth_rel_err = 0;
  double valid_rate = 0;
};

struct EvalReport {
  // key = bucket label; empty buckets are absent
  std::map<std::string, BucketMetrics> buckets;
  std::vector<RefinerLogRecord> curves;
};

namespace detail {

inline const char* bucket_label(double z) {
  if (z < 50) return "0-50";
  if (z < 100) return "50-100";
  if (z < 200) return "100-200";
  return "200+";
}

}  // namespace detail

inline EvalReport evaluate_records(const std::vector<TruthRecord>& truth,
                                   const std::vector<DepthRecord>& depth,
                                   const std::vector<RefinerLogRecord>& curves) {
  std::map<std::pair<int, int>, const TruthRecord*> by_id;
  for (const auto& t : truth) by_id[{t.frame_id, t.obj_id}] = &t;

  struct Acc {
    int count = 0, n_valid = 0, n_depth = 0;
    double abs_d = 0, rel_z = 0;
  };
  std::map<std::string, Acc> acc;
  for (const auto& r : depth) {
    const auto it = by_id.find({r.frame_id, r.det_id});
    if (it == by_id.end())
      throw std::runtime_error("evaluate: no truth for frame " +
                               std::to_string(r.frame_id) + " object " +
                               std::to_string(r.det_id));
    const TruthRecord& t = *it->second;
    Acc& a = acc[detail::bucket_label(t.z_cam)];
    ++a.count;
    if (r.valid && std::isfinite(r.disparity)) {
      ++a.n_valid;
      a.abs_d += std::abs(r.disparity - t.disparity);
    }
    if (std::isfinite(r.z_fused) && t.z_cam > 0) {
      ++a.n_depth;
      a.rel_z += std::abs(r.z_fused - t.z_cam) / t.z_cam;
    }
  }

  EvalReport rep;
  for (const auto& [label, a] : acc) {
    BucketMetrics m;
    m.count = a.count;
    m.n_valid = a.n_valid;
    m.n_depth = a.n_depth;
    m.disparity_mae = a.n_valid ? a.abs_d / a.n_valid : 0;
    m.depth_rel_err = a.n_depth ? a.rel_z / a.n_depth : 0;
    m.valid_rate = a.count ? double(a.n_valid) / a.count : 0;
    rep.buckets[label] = m;
  }
  rep.curves = curves;
  return rep;
}

inline std::string eval_report_text(const EvalReport& rep) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(4);
  os << "bucket_m    count  valid_rate  disparity_mae  depth_rel_err\n";
  for (const char* label : {"0-50", "50-100", "100-200", "200+"}) {
    const auto it = rep.buckets.find(label);
    if (it == rep.buckets.end()) continue;
    const BucketMetrics& m = it->second;
    os << label;
    for (std::size_t i = std::string(label).size(); i < 12; ++i) os << ' ';
    os << m.count << "  " << m.valid_rate << "  " << m.disparity_mae << "  "
       << m.depth_rel_err << '\n';
  }
  os << "\nrefiner offsets (frame rect radar object):\n";
  for (const auto& c : rep.curves)
    os << c.frame_id << ' ' << detail::fmt6(c.rect_delta) << ' '
       << detail::fmt6(c.radar_offset) << ' ' << detail::fmt6(c.obj_offset)
       << '\n';
  return os.str();
}

inline nlohmann::json eval_report_json(const EvalReport& rep) {
  nlohmann::json j;
  j["buckets"] = nlohmann::json::object();
  for (const auto& [label, m] : rep.buckets) {
    j["buckets"][label] = {{"count", m.count},
                           {"n_valid", m.n_valid},
                           {"n_depth", m.n_depth},
                           {"disparity_mae", m.disparity_mae},
                           {"depth_rel_err", m.depth_rel_err},
                           {"valid_rate", m.valid_rate}};
  }
  j["refiner_curves"] = nlohmann::json::array();
  for (const auto& c : rep.curves)
    j["refiner_curves"].push_back({{"frame", c.frame_id},
                                   {"rect", c.rect_delta},
                                   {"radar", c.radar_offset},
                                   {"object", c.obj_offset}});
  return j;
}

/// Score a pipeline output directory against the run directory's truth file.
inline EvalReport evaluate_run(const std::string& run_dir,
                               const std::string& out_dir) {
  const auto truth = load_truth_records(run_dir + "/truth.txt");
  const auto depth = load_depth_records(out_dir + "/depth.txt");
  std::vector<RefinerLogRecord> curves;
  if (std::ifstream(out_dir + "/refiners.txt").good())
    curves = load_refiner_log(out_dir + "/refiners.txt");
  return evaluate_records(truth, depth, curves);
}

}  // namespace ranger
