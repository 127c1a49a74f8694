#pragma once

// Independent reference implementations used to cross-check the library.
// These deliberately avoid the library's own formulas: areas are counted on
// a discrete grid, assignments enumerated exhaustively, and matchings
// maximized by brute force.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include "tcdsg/cost_matrix.hpp"
#include "tcdsg/geometry.hpp"
#include "tcdsg/metrics.hpp"
#include "tcdsg/schema.hpp"

namespace oracles {

// Number of cells of an n-cell grid over [0,1] whose centers fall inside
// [lo, hi].
inline long grid_count(double lo, double hi, int n) {
  long count = 0;
  for (int i = 0; i < n; ++i) {
    const double center = (i + 0.5) / n;
    if (center > lo && center < hi) ++count;
  }
  return count;
}

struct RasterPair {
  double iou = 0.0;
  double giou = 0.0;
};

// IoU/GIoU estimated by counting grid-cell centers, per axis.
inline RasterPair raster_iou_giou(const tcdsg::Box& a, const tcdsg::Box& b, int n = 1000) {
  const long ax = grid_count(a.x1, a.x2, n), ay = grid_count(a.y1, a.y2, n);
  const long bx = grid_count(b.x1, b.x2, n), by = grid_count(b.y1, b.y2, n);
  const long ix = grid_count(std::max(a.x1, b.x1), std::min(a.x2, b.x2), n);
  const long iy = grid_count(std::max(a.y1, b.y1), std::min(a.y2, b.y2), n);
  const long ex = grid_count(std::min(a.x1, b.x1), std::max(a.x2, b.x2), n);
  const long ey = grid_count(std::min(a.y1, b.y1), std::max(a.y2, b.y2), n);

  const long inter = ix * iy;
  const long uni = ax * ay + bx * by - inter;
  const long enclose = ex * ey;
  RasterPair out;
  out.iou = uni > 0 ? static_cast<double>(inter) / uni : 0.0;
  out.giou = enclose > 0
                 ? out.iou - static_cast<double>(enclose - uni) / enclose
                 : out.iou;
  return out;
}

// Minimum-cost complete column assignment by exhaustive enumeration of
// injective column -> row maps. Exponential; use for small matrices only.
inline double brute_force_assignment(const tcdsg::CostMatrix& costs,
                                     std::vector<int>* best_rows = nullptr) {
  const int rows = costs.rows;
  const int cols = costs.cols;
  std::vector<int> rows_for_col(static_cast<std::size_t>(cols), -1);
  std::vector<char> used(static_cast<std::size_t>(rows), 0);
  std::vector<int> best(static_cast<std::size_t>(cols), -1);
  double best_cost = std::numeric_limits<double>::infinity();

  std::function<void(int, double)> recurse = [&](int col, double cost_so_far) {
    if (col == cols) {
      if (cost_so_far < best_cost) {
        best_cost = cost_so_far;
        best = rows_for_col;
      }
      return;
    }
    for (int r = 0; r < rows; ++r) {
      if (used[static_cast<std::size_t>(r)]) continue;
      used[static_cast<std::size_t>(r)] = 1;
      rows_for_col[static_cast<std::size_t>(col)] = r;
      recurse(col + 1, cost_so_far + costs.at(r, col));
      used[static_cast<std::size_t>(r)] = 0;
    }
  };
  recurse(0, 0.0);
  if (best_rows != nullptr) *best_rows = best;
  return best_cost;
}

// Maximum number of (prediction, gt) tracklet pairs over all one-to-one
// matchings, eligibility judged by the library predicate. Recursion over
// ground-truth tracklets; exponential in |gt|.
inline long max_bipartite_tracklet_matches(std::span<const tcdsg::Tracklet> preds,
                                           std::span<const tcdsg::Tracklet> gts,
                                           double temporal_thresh, double spatial_thresh) {
  std::vector<char> pred_used(preds.size(), 0);
  std::function<long(std::size_t)> recurse = [&](std::size_t g) -> long {
    if (g == gts.size()) return 0;
    long best = recurse(g + 1);  // leave this gt unmatched
    for (std::size_t p = 0; p < preds.size(); ++p) {
      if (pred_used[p]) continue;
      if (!tcdsg::tracklet_match_eligible(preds[p], gts[g], temporal_thresh, spatial_thresh)) {
        continue;
      }
      pred_used[p] = 1;
      best = std::max(best, 1 + recurse(g + 1));
      pred_used[p] = 0;
    }
    return best;
  };
  return recurse(0);
}

// Mean over classes of the usual two-term binary cross-entropy; reference
// for the focal-loss reduction check.
inline double binary_cross_entropy(std::span<const double> scores,
                                   std::span<const std::uint8_t> targets) {
  double sum = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double p = std::clamp(scores[i], 1e-7, 1.0 - 1e-7);
    sum += targets[i] != 0 ? -std::log(p) : -std::log(1.0 - p);
  }
  return sum / static_cast<double>(scores.size());
}

// Portable uniform doubles from raw mt19937_64 output (distribution classes
// are implementation-defined; bit arithmetic is not).
inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

inline tcdsg::Box random_box(std::mt19937_64& rng, double min_size = 0.01) {
  const double w = uniform(rng, min_size, 0.5);
  const double h = uniform(rng, min_size, 0.5);
  const double x = uniform(rng, 0.0, 1.0 - w);
  const double y = uniform(rng, 0.0, 1.0 - h);
  return tcdsg::Box{x, y, x + w, y + h};
}

}  // namespace oracles
