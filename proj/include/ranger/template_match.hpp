#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <vector>

#include "ranger/census.hpp"
#include "ranger/detection.hpp"
#include "ranger/image.hpp"

namespace ranger {

/// Per-object disparity at full-resolution scale.
struct ObjectDisparity {
  int det_id = -1;
  double disparity = 0;
  ObjectKind kind = ObjectKind::kFar;
  int n_blocks_used = 0;
  bool valid = false;
};

struct FrontalCrop {
  double x0 = 0.25, y0 = 0.25, x1 = 0.75, y1 = 0.75;  // normalized
  bool contains(double cx, double cy) const {
    return cx >= x0 && cx < x1 && cy >= y0 && cy < y1;
  }
};

struct RangerConfig {
  double tau_s = 48;            // min side length, px: below is FAR
  int close_scale = 2;          // downscale factor for CLOSE census
  int grid_side_points = 8;     // FAR grid points per side
  int max_total_points = 64;    // cap per block
  int close_block_side_points = 5;  // points per side in a CLOSE sub-block
  double tau_d = 1.0;           // aggregation gap, full-scale px
  int n_min = 3;                // min blocks in the winning run
  double tau_v = 1.0;           // forward-backward tolerance, px
  int max_objects = 16;
  FrontalCrop frontal_crop;
  int dx_max_far = 64;    // full-res search ceiling, px
  int dx_max_close = 192; // full-scale search ceiling for CLOSE, px
};

inline void validate(const RangerConfig& c) {
  if (c.tau_s <= 0 || c.tau_d <= 0 || c.tau_v < 0)
    throw std::invalid_argument("RangerConfig: thresholds must be positive");
  if (c.n_min < 1) throw std::invalid_argument("RangerConfig: n_min must be >= 1");
  if (c.close_scale < 1)
    throw std::invalid_argument("RangerConfig: close_scale must be >= 1");
  if (c.grid_side_points < 1 || c.max_total_points < 1 ||
      c.close_block_side_points < 1)
    throw std::invalid_argument("RangerConfig: point counts must be >= 1");
  if (c.max_objects < 0)
    throw std::invalid_argument("RangerConfig: max_objects must be >= 0");
  if (c.dx_max_far < 0 || c.dx_max_close < 0)
    throw std::invalid_argument("RangerConfig: search ceilings must be >= 0");
}

inline ObjectKind classify_far_close(const Detection& d, int img_w, int img_h,
                                     double tau_s) {
  return std::max(d.w * img_w, d.h * img_h) < tau_s ? ObjectKind::kFar
                                                    : ObjectKind::kClose;
}

/// occluders[i] lists indices j whose boxes overlap box i with positive area
/// and sit lower in the image (larger bottom y = closer to the camera).
inline std::vector<std::vector<int>> find_occluders(
    const std::vector<Detection>& dets) {
  const int n = int(dets.size());
  std::vector<std::vector<int>> occ(n);
  for (int i = 0; i < n; ++i) {
    const double ix0 = dets[i].cx - dets[i].w / 2, ix1 = dets[i].cx + dets[i].w / 2;
    const double iy0 = dets[i].cy - dets[i].h / 2, iy1 = dets[i].cy + dets[i].h / 2;
    const double ibottom = iy1;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      const double jx0 = dets[j].cx - dets[j].w / 2, jx1 = dets[j].cx + dets[j].w / 2;
      const double jy0 = dets[j].cy - dets[j].h / 2, jy1 = dets[j].cy + dets[j].h / 2;
      const double ox = std::min(ix1, jx1) - std::max(ix0, jx0);
      const double oy = std::min(iy1, jy1) - std::max(iy0, jy0);
      if (ox > 0 && oy > 0 && jy1 > ibottom) occ[i].push_back(j);
    }
  }
  return occ;
}

/// Priority selection: frontal detections (center inside frontal_crop) by
/// descending box area, then the rest by descending bottom-y (nearer first);
/// ties break by id. Returns indices into the input, truncated to the budget.
inline std::vector<int> select_objects(const std::vector<Detection>& dets,
                                       const RangerConfig& cfg) {
  std::vector<int> frontal, rest;
  for (int i = 0; i < int(dets.size()); ++i)
    (cfg.frontal_crop.contains(dets[i].cx, dets[i].cy) ? frontal : rest).push_back(i);
  std::sort(frontal.begin(), frontal.end(), [&](int a, int b) {
    const double aa = dets[a].w * dets[a].h, ab = dets[b].w * dets[b].h;
    if (aa != ab) return aa > ab;
    return dets[a].id < dets[b].id;
  });
  std::sort(rest.begin(), rest.end(), [&](int a, int b) {
    const double ba = dets[a].cy + dets[a].h / 2, bb = dets[b].cy + dets[b].h / 2;
    if (ba != bb) return ba > bb;
    return dets[a].id < dets[b].id;
  });
  std::vector<int> out;
  for (int i : frontal) out.push_back(i);
  for (int i : rest) out.push_back(i);
  if (int(out.size()) > cfg.max_objects) out.resize(cfg.max_objects);
  return out;
}

struct AggregationResult {
  bool valid = false;
  double disparity = 0;
  int run_length = 0;
};

/// Robust per-object aggregation: sort ascending, take the longest run whose
/// consecutive gaps stay under tau_d (equal lengths: the larger-disparity run
/// wins), require at least n_min members, return the run's median element
/// (index run_length / 2).
inline AggregationResult aggregate_close_disparities(std::vector<double> disps,
                                                     double tau_d, int n_min) {
  AggregationResult out;
  if (disps.empty()) return out;
  std::sort(disps.begin(), disps.end());
  int best_start = -1, best_len = 0;
  int start = 0;
  for (int i = 1; i <= int(disps.size()); ++i) {
    if (i == int(disps.size()) || disps[i] - disps[i - 1] >= tau_d) {
      const int len = i - start;
      if (len >= best_len) {  // later run = larger disparities = closer wins ties
        best_len = len;
        best_start = start;
      }
      start = i;
    }
  }
  if (best_len < n_min) return out;
  out.valid = true;
  out.run_length = best_len;
  out.disparity = disps[best_start + best_len / 2];
  return out;
}

/// FAR: one block over an n-by-n cell-center grid in full-resolution census
/// coordinates. CLOSE: the box splits into sub-blocks of roughly tau_s/2 px a
/// side (at least 2x2), each sampled on its own grid whose points are mapped
/// into the reduced census raster. Points inside an occluder's box drop out;
/// blocks left with fewer than 4 points drop entirely.
inline std::vector<QueryBlock> sample_query_points(
    const Detection& det, ObjectKind kind, const std::vector<PixelBox>& occluder_boxes,
    const RangerConfig& cfg, int img_w, int img_h) {
  const PixelBox box = to_pixel_box(det, img_w, img_h);
  const auto occluded = [&](double x, double y) {
    for (const auto& b : occluder_boxes)
      if (b.contains(x, y)) return true;
    return false;
  };
  std::vector<QueryBlock> blocks;
  const int cap = std::max(1, int(std::sqrt(double(cfg.max_total_points))));

  if (kind == ObjectKind::kFar) {
    const int n = std::min(cfg.grid_side_points, cap);
    QueryBlock blk;
    blk.kind = ObjectKind::kFar;
    blk.dx_min = 0;
    blk.dx_max = cfg.dx_max_far;
    blk.dy_min = -1;
    blk.dy_max = 1;
    for (int j = 0; j < n; ++j) {
      const double fy = box.y0 + (j + 0.5) * box.height() / n;
      for (int i = 0; i < n; ++i) {
        const double fx = box.x0 + (i + 0.5) * box.width() / n;
        const int px = int(std::lround(fx)), py = int(std::lround(fy));
        if (px < 0 || px >= img_w || py < 0 || py >= img_h) continue;
        if (occluded(fx, fy)) continue;
        blk.points.emplace_back(px, py);
      }
    }
    if (int(blk.points.size()) >= 4) blocks.push_back(std::move(blk));
    return blocks;
  }

  const int s = cfg.close_scale;
  const int cw = img_w / s, ch = img_h / s;  // reduced census dims
  const double half_tau = cfg.tau_s / 2;
  const int cols = std::max(2, int(box.width() / half_tau));
  const int rows = std::max(2, int(box.height() / half_tau));
  const int q = std::min(cfg.close_block_side_points, cap);
  const int dx_max_scaled = (cfg.dx_max_close + s - 1) / s;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const double sx0 = box.x0 + c * box.width() / cols;
      const double sy0 = box.y0 + r * box.height() / rows;
      const double sw = box.width() / cols, sh = box.height() / rows;
      QueryBlock blk;
      blk.kind = ObjectKind::kClose;
      blk.dx_min = 0;
      blk.dx_max = dx_max_scaled;
      blk.dy_min = -1;
      blk.dy_max = 1;
      for (int j = 0; j < q; ++j) {
        const double fy = sy0 + (j + 0.5) * sh / q;
        for (int i = 0; i < q; ++i) {
          const double fx = sx0 + (i + 0.5) * sw / q;
          if (fx < 0 || fx >= img_w || fy < 0 || fy >= img_h) continue;
          if (occluded(fx, fy)) continue;
          const int mx = int(std::lround(fx * cw / double(img_w)));
          const int my = int(std::lround(fy * ch / double(img_h)));
          if (mx < 0 || mx >= cw || my < 0 || my >= ch) continue;
          blk.points.emplace_back(mx, my);
        }
      }
      if (int(blk.points.size()) >= 4) blocks.push_back(std::move(blk));
    }
  }
  return blocks;
}

/// Census images for one frame, shared between consumers. When filled by the
/// object ranger the transforms cover only the dilated detection regions (the
/// codes are bit-identical inside), so a cache is tied to one frame and one
/// detection set unless the caller fills it with full-frame transforms.
struct CensusCache {
  CensusImage full_left, full_right;
  CensusImage scaled_left, scaled_right;
  bool has_full = false;
  bool has_scaled = false;
};

struct RangerStats {
  std::size_t query_points = 0;  // full-resolution grid points sampled
  std::size_t image_pixels = 0;
  int n_far = 0;
  int n_close = 0;
};

namespace detail {

inline void add_roi(std::vector<CensusRoi>& rois, const PixelBox& b, double sx,
                    double sy, int dilate_x, int dilate_y, int w, int h) {
  CensusRoi r;
  r.x0 = std::max(0, int(std::floor(b.x0 * sx)) - dilate_x);
  r.x1 = std::min(w, int(std::ceil(b.x1 * sx)) + dilate_x + 1);
  r.y0 = std::max(0, int(std::floor(b.y0 * sy)) - dilate_y);
  r.y1 = std::min(h, int(std::ceil(b.y1 * sy)) + dilate_y + 1);
  rois.push_back(r);
}

}  // namespace detail

/// Full object ranging pass: select, classify, sample, batch-match with
/// forward-backward verification, and aggregate. Returns one entry per
/// selected detection, ordered as in the input list.
inline std::vector<ObjectDisparity> estimate_object_disparities(
    const GrayImage& left, const GrayImage& right,
    const std::vector<Detection>& dets, const RangerConfig& cfg,
    CensusCache* cache = nullptr, int workers = 1, RangerStats* stats = nullptr) {
  validate(cfg);
  if (left.width != right.width || left.height != right.height)
    throw std::invalid_argument("estimate_object_disparities: image dims differ");
  const int w = left.width, h = left.height;
  CensusCache local;
  CensusCache& cc = cache ? *cache : local;
  if (stats) {
    stats->query_points = 0;
    stats->image_pixels = std::size_t(w) * h;
    stats->n_far = stats->n_close = 0;
  }
  if (dets.empty()) return {};

  std::vector<int> sel = select_objects(dets, cfg);
  std::sort(sel.begin(), sel.end());  // report in input order
  const auto occ = find_occluders(dets);

  std::vector<QueryBlock> far_blocks, close_blocks;
  std::vector<ObjectKind> kind(dets.size(), ObjectKind::kFar);
  std::vector<CensusRoi> far_rois, scaled_rois;
  const int s = cfg.close_scale;
  const int cw = w / s, ch = h / s;
  const int dx_max_scaled = (cfg.dx_max_close + s - 1) / s;

  for (int i : sel) {
    kind[i] = classify_far_close(dets[i], w, h, cfg.tau_s);
    std::vector<PixelBox> occ_boxes;
    for (int j : occ[i]) occ_boxes.push_back(to_pixel_box(dets[j], w, h));
    auto blocks = sample_query_points(dets[i], kind[i], occ_boxes, cfg, w, h);
    const PixelBox box = to_pixel_box(dets[i], w, h);
    for (auto& b : blocks) {
      b.owner = i;
      if (stats) stats->query_points += b.points.size();
      if (kind[i] == ObjectKind::kFar)
        far_blocks.push_back(std::move(b));
      else
        close_blocks.push_back(std::move(b));
    }
    if (kind[i] == ObjectKind::kFar) {
      if (stats) ++stats->n_far;
      detail::add_roi(far_rois, box, 1, 1, cfg.dx_max_far + 2, 3, w, h);
    } else {
      if (stats) ++stats->n_close;
      detail::add_roi(scaled_rois, box, double(cw) / w, double(ch) / h,
                      dx_max_scaled + 2, 3, cw, ch);
    }
  }

  if (!far_blocks.empty() && !cc.has_full) {
    cc.full_left = census_transform_rois(left, w, h, far_rois, workers);
    cc.full_right = census_transform_rois(right, w, h, far_rois, workers);
    cc.has_full = true;
  }
  if (!close_blocks.empty() && !cc.has_scaled) {
    cc.scaled_left = census_transform_rois(left, cw, ch, scaled_rois, workers);
    cc.scaled_right = census_transform_rois(right, cw, ch, scaled_rois, workers);
    cc.has_scaled = true;
  }

  const auto far_res = far_blocks.empty()
                           ? std::vector<std::optional<MatchResult>>{}
                           : batch_match(far_blocks, cc.full_left, cc.full_right,
                                         cfg.tau_v, workers);
  const auto close_res = close_blocks.empty()
                             ? std::vector<std::optional<MatchResult>>{}
                             : batch_match(close_blocks, cc.scaled_left,
                                           cc.scaled_right, cfg.tau_v, workers);

  std::vector<ObjectDisparity> out;
  out.reserve(sel.size());
  for (int i : sel) {
    ObjectDisparity od;
    od.det_id = dets[i].id;
    od.kind = kind[i];
    if (kind[i] == ObjectKind::kFar) {
      for (std::size_t k = 0; k < far_blocks.size(); ++k) {
        if (far_blocks[k].owner != i) continue;
        if (far_res[k] && far_res[k]->verified) {
          od.valid = true;
          od.disparity = far_res[k]->dx_subpix;
          od.n_blocks_used = 1;
        }
        break;  // FAR has a single block
      }
    } else {
      std::vector<double> disps;
      for (std::size_t k = 0; k < close_blocks.size(); ++k) {
        if (close_blocks[k].owner != i) continue;
        if (close_res[k] && close_res[k]->verified)
          disps.push_back(close_res[k]->dx_subpix * s);  // back to full scale
      }
      const auto agg = aggregate_close_disparities(disps, cfg.tau_d, cfg.n_min);
      od.valid = agg.valid;
      od.disparity = agg.disparity;
      od.n_blocks_used = agg.run_length;
    }
    out.push_back(od);
  }
  return out;
}

}  // namespace ranger
