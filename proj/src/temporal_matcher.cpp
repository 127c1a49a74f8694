#include "tcdsg/temporal_matcher.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>

#include "tcdsg/errors.hpp"

namespace tcdsg {

namespace {

std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

TripletKey key_of(const GtTriplet& t, const FrameGroundTruth& frame) {
  auto missing = [&](const char* what) -> ValidationError {
    return ValidationError(std::string("video '") + frame.video_id + "' frame " +
                           std::to_string(frame.frame_idx) + ": " + what +
                           " instance id required for matching (run pseudo-label first)");
  };
  if (!t.subject.id) throw missing("subject");
  TripletKey key;
  key.subject_id = *t.subject.id;
  key.relation = t.relation;
  if (t.object) {
    if (!t.object->id) throw missing("object");
    key.object_id = *t.object->id;
  }
  return key;
}

}  // namespace

std::size_t TripletKeyHash::operator()(const TripletKey& k) const {
  std::uint64_t h = mix64(static_cast<std::uint64_t>(k.subject_id));
  h = mix64(h ^ static_cast<std::uint64_t>(k.object_id));
  h = mix64(h ^ static_cast<std::uint64_t>(static_cast<std::int64_t>(k.relation)));
  return static_cast<std::size_t>(h);
}

void TripletRegistry::insert(const TripletKey& key, int query) {
  if (!map_.emplace(key, query).second) {
    throw std::logic_error("TripletRegistry is insert-only: key already registered");
  }
  locked_.insert(query);
}

void TripletRegistry::reset() {
  map_.clear();
  locked_.clear();
}

// Shortest-augmenting-path assignment with row/column potentials, run over
// the transposed matrix so the small side (ground truth) drives the
// augmentations. Strict '<' comparisons make the lowest row index win ties.
std::vector<std::pair<int, int>> hungarian(const CostMatrix& costs) {
  const int n = costs.cols;  // items to place
  const int m = costs.rows;  // slots
  if (n > m) {
    throw InfeasibleError("hungarian: " + std::to_string(n) + " columns exceed " +
                          std::to_string(m) + " rows");
  }
  for (const double v : costs.values) {
    if (!std::isfinite(v)) throw ValidationError("hungarian: cost matrix has non-finite entries");
  }
  if (n == 0) return {};

  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(static_cast<std::size_t>(n) + 1, 0.0);
  std::vector<double> v(static_cast<std::size_t>(m) + 1, 0.0);
  std::vector<int> assigned_col(static_cast<std::size_t>(m) + 1, 0);  // row slot -> col item
  std::vector<int> way(static_cast<std::size_t>(m) + 1, 0);

  for (int i = 1; i <= n; ++i) {
    assigned_col[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(m) + 1, kInf);
    std::vector<char> used(static_cast<std::size_t>(m) + 1, 0);
    do {
      used[static_cast<std::size_t>(j0)] = 1;
      const int i0 = assigned_col[static_cast<std::size_t>(j0)];
      double delta = kInf;
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        const double cur = costs.at(j - 1, i0 - 1) - u[static_cast<std::size_t>(i0)] -
                           v[static_cast<std::size_t>(j)];
        if (cur < minv[static_cast<std::size_t>(j)]) {
          minv[static_cast<std::size_t>(j)] = cur;
          way[static_cast<std::size_t>(j)] = j0;
        }
        if (minv[static_cast<std::size_t>(j)] < delta) {
          delta = minv[static_cast<std::size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[static_cast<std::size_t>(j)]) {
          u[static_cast<std::size_t>(assigned_col[static_cast<std::size_t>(j)])] += delta;
          v[static_cast<std::size_t>(j)] -= delta;
        } else {
          minv[static_cast<std::size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (assigned_col[static_cast<std::size_t>(j0)] != 0);
    do {
      const int j1 = way[static_cast<std::size_t>(j0)];
      assigned_col[static_cast<std::size_t>(j0)] = assigned_col[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<std::pair<int, int>> result(static_cast<std::size_t>(n));
  for (int j = 1; j <= m; ++j) {
    const int col = assigned_col[static_cast<std::size_t>(j)];
    if (col != 0) result[static_cast<std::size_t>(col - 1)] = {j - 1, col - 1};
  }
  return result;
}

MatchResult match_frame(const FramePrediction& preds, const FrameGroundTruth& gt,
                        const CostWeights& weights, TripletRegistry& registry, double penalty) {
  if (penalty <= 0.0) throw ValidationError("match_frame: penalty must be positive");
  const CostMatrix cost = build_cost_matrix(preds, gt, weights);
  const int n_preds = cost.rows;
  const int n_gt = cost.cols;

  std::unordered_map<int, int> row_of_query;
  for (int i = 0; i < n_preds; ++i) {
    row_of_query[preds.predictions[static_cast<std::size_t>(i)].query] = i;
  }

  std::vector<TripletKey> keys;
  keys.reserve(static_cast<std::size_t>(n_gt));
  for (const auto& t : gt.triplets) keys.push_back(key_of(t, gt));

  MatchResult result;

  // Forced pass. A query may hold several registered triplets after past
  // scarcity; the cheaper one (by this frame's cost) stays forced, the rest
  // return to the solver pool.
  std::map<int, std::vector<int>> forced_by_query;
  for (int j = 0; j < n_gt; ++j) {
    if (registry.contains(keys[static_cast<std::size_t>(j)])) {
      forced_by_query[registry.query_of(keys[static_cast<std::size_t>(j)])].push_back(j);
    }
  }
  std::vector<char> gt_taken(static_cast<std::size_t>(n_gt), 0);
  std::vector<char> row_taken(static_cast<std::size_t>(n_preds), 0);
  for (const auto& [query, gts] : forced_by_query) {
    int winner = gts.front();
    if (gts.size() > 1) {
      auto it = row_of_query.find(query);
      if (it != row_of_query.end()) {
        for (const int j : gts) {
          if (cost.at(it->second, j) < cost.at(it->second, winner)) winner = j;
        }
      }
      for (const int j : gts) {
        if (j != winner) result.collision_gts.push_back(j);
      }
    }
    result.assignments.push_back(Assignment{query, winner, true});
    gt_taken[static_cast<std::size_t>(winner)] = 1;
    if (auto it = row_of_query.find(query); it != row_of_query.end()) {
      row_taken[static_cast<std::size_t>(it->second)] = 1;
    }
  }

  // Solver pass over the rows not consumed by forcing, with the registry
  // penalty added to every locked query's row.
  std::vector<int> pool_gt;
  for (int j = 0; j < n_gt; ++j) {
    if (!gt_taken[static_cast<std::size_t>(j)]) pool_gt.push_back(j);
  }
  std::vector<int> free_rows;
  for (int i = 0; i < n_preds; ++i) {
    if (!row_taken[static_cast<std::size_t>(i)]) free_rows.push_back(i);
  }
  if (!pool_gt.empty()) {
    if (static_cast<int>(pool_gt.size()) > static_cast<int>(free_rows.size())) {
      throw InfeasibleError("frame " + std::to_string(gt.frame_idx) + " of video '" +
                            gt.video_id + "': not enough free queries after forced assignments");
    }
    CostMatrix sub(static_cast<int>(free_rows.size()), static_cast<int>(pool_gt.size()));
    const auto& locked = registry.locked_queries();
    for (std::size_t r = 0; r < free_rows.size(); ++r) {
      const int row = free_rows[r];
      const int query = preds.predictions[static_cast<std::size_t>(row)].query;
      const double add = locked.count(query) != 0 ? penalty : 0.0;
      for (std::size_t c = 0; c < pool_gt.size(); ++c) {
        sub.at(static_cast<int>(r), static_cast<int>(c)) = cost.at(row, pool_gt[c]) + add;
      }
    }
    for (const auto& [sub_row, sub_col] : hungarian(sub)) {
      const int row = free_rows[static_cast<std::size_t>(sub_row)];
      const int j = pool_gt[static_cast<std::size_t>(sub_col)];
      const int query = preds.predictions[static_cast<std::size_t>(row)].query;
      result.assignments.push_back(Assignment{query, j, false});
      row_taken[static_cast<std::size_t>(row)] = 1;
      if (!registry.contains(keys[static_cast<std::size_t>(j)])) {
        registry.insert(keys[static_cast<std::size_t>(j)], query);
      }
    }
  }

  std::sort(result.assignments.begin(), result.assignments.end(),
            [](const Assignment& a, const Assignment& b) { return a.gt < b.gt; });
  for (int i = 0; i < n_preds; ++i) {
    if (!row_taken[static_cast<std::size_t>(i)]) {
      result.background_queries.push_back(preds.predictions[static_cast<std::size_t>(i)].query);
    }
  }
  std::sort(result.background_queries.begin(), result.background_queries.end());
  std::sort(result.collision_gts.begin(), result.collision_gts.end());
  return result;
}

MatchResult VideoMatcher::push(const FramePrediction& preds, const FrameGroundTruth& gt) {
  if (preds.video_id != gt.video_id || preds.frame_idx != gt.frame_idx) {
    throw ValidationError("stream alignment mismatch: ground truth at video '" + gt.video_id +
                          "' frame " + std::to_string(gt.frame_idx) + ", predictions at video '" +
                          preds.video_id + "' frame " + std::to_string(preds.frame_idx));
  }
  if (gt.video_id != current_video_) {
    registry_.reset();
    current_video_ = gt.video_id;
  } else if (gt.frame_idx <= last_frame_) {
    throw ValidationError("video '" + gt.video_id + "': frames must be strictly increasing");
  }
  last_frame_ = gt.frame_idx;
  return match_frame(preds, gt, weights_, registry_, penalty_);
}

std::vector<MatchResult> match_video(std::span<const FramePrediction> preds,
                                     std::span<const FrameGroundTruth> gts,
                                     const CostWeights& weights, double penalty) {
  if (preds.size() != gts.size()) {
    const std::size_t k = std::min(preds.size(), gts.size());
    const std::string where =
        preds.size() > k ? "predictions at video '" + preds[k].video_id + "' frame " +
                               std::to_string(preds[k].frame_idx)
                         : "ground truth at video '" + gts[k].video_id + "' frame " +
                               std::to_string(gts[k].frame_idx);
    throw ValidationError("stream alignment mismatch: unmatched trailing " + where);
  }
  VideoMatcher matcher(weights, penalty);
  std::vector<MatchResult> results;
  results.reserve(gts.size());
  for (std::size_t k = 0; k < gts.size(); ++k) {
    results.push_back(matcher.push(preds[k], gts[k]));
  }
  return results;
}

}  // namespace tcdsg
