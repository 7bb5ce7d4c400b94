#pragma once

#include <algorithm>
#include <cstdlib>
#include <stdexcept>
#include <vector>

#include "ranger/bm.hpp"
#include "ranger/image.hpp"

namespace ranger {

struct ImageRoi {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // half-open
  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
};

/// Vertical-offset search: try each candidate shift of the left image and
/// keep the one whose ROI block-match yields the most valid pixels above the
/// minimum disparity. Ties prefer smaller |delta|, then the negative one.
inline int auto_rect_search(const GrayImage& left, const GrayImage& right,
                            const ImageRoi& roi, int delta_min, int delta_max,
                            const BmParams& bm, int workers = 1) {
  if (roi.width() < bm.block_size || roi.height() < bm.block_size)
    throw std::invalid_argument("auto_rect_search: ROI smaller than the match window");
  if (roi.x0 < 0 || roi.y0 < 0 || roi.x1 > left.width || roi.y1 > left.height)
    throw std::invalid_argument("auto_rect_search: ROI leaves the image");
  if (delta_min > delta_max)
    throw std::invalid_argument("auto_rect_search: empty delta range");
  if (left.width != right.width || left.height != right.height)
    throw std::invalid_argument("auto_rect_search: image dims differ");

  const GrayImage rcrop = crop(right, roi.x0, roi.y0, roi.width(), roi.height());
  int best_delta = 0;
  long best_count = -1;
  for (int delta = delta_min; delta <= delta_max; ++delta) {
    const GrayImage lcrop =
        crop(shift_vertical(left, delta), roi.x0, roi.y0, roi.width(), roi.height());
    const DisparityMap d = bm_disparity(lcrop, rcrop, bm, workers);
    long count = 0;
    const int lo = bm.min_disparity * DisparityMap::kSubLevels;
    for (std::int16_t r : d.raw)
      if (r != DisparityMap::kInvalid && r > lo) ++count;
    bool better = count > best_count;
    if (count == best_count) {
      if (std::abs(delta) < std::abs(best_delta))
        better = true;
      else if (std::abs(delta) == std::abs(best_delta) && delta < best_delta)
        better = true;
    }
    if (better) {
      best_count = count;
      best_delta = delta;
    }
  }
  return best_delta;
}

/// Sliding-window median with a per-frame rate clamp over the raw per-frame
/// search results.
struct RectOffsetState {
  int window = 5;        // k
  double delta_max = 1;  // px per frame
  double current = 0;    // applied offset
  std::vector<int> history;  // ring buffer of raw search results
  std::size_t next = 0;

  explicit RectOffsetState(int k = 5, double rate = 1)
      : window(k), delta_max(rate) {
    if (k < 1) throw std::invalid_argument("RectOffsetState: window must be >= 1");
  }
};

/// Push the frame's raw search result and return the applied offset: the
/// window's lower median, rate-limited against the previous applied value.
inline double filter_offset(RectOffsetState& st, int delta_star) {
  if (int(st.history.size()) < st.window) {
    st.history.push_back(delta_star);
  } else {
    st.history[st.next] = delta_star;
    st.next = (st.next + 1) % st.history.size();
  }
  std::vector<int> sorted = st.history;
  std::sort(sorted.begin(), sorted.end());
  const double candidate = sorted[(sorted.size() - 1) / 2];
  const double step = std::clamp(candidate - st.current, -st.delta_max, st.delta_max);
  st.current += step;
  return st.current;
}

}  // namespace ranger
