#pragma once

#include <cstdint>
#include <limits>
#include <set>
#include <span>
#include <unordered_map>
#include <vector>

#include "tcdsg/cost_matrix.hpp"
#include "tcdsg/schema.hpp"

namespace tcdsg {

// Identity of a ground-truth triplet within one video: instance ids plus the
// relation class. Subject/object class labels are deliberately not part of
// the key.
struct TripletKey {
  static constexpr std::int64_t kNoObject = std::numeric_limits<std::int64_t>::min();

  std::int64_t subject_id = 0;
  std::int64_t object_id = kNoObject;
  int relation = 0;

  friend bool operator==(const TripletKey& a, const TripletKey& b) = default;
};

struct TripletKeyHash {
  std::size_t operator()(const TripletKey& k) const;
};

// Insert-only map from triplet identity to the query it was first assigned
// to. Scoped to one video; reset between videos.
class TripletRegistry {
 public:
  bool contains(const TripletKey& key) const { return map_.count(key) != 0; }
  int query_of(const TripletKey& key) const { return map_.at(key); }
  void insert(const TripletKey& key, int query);

  // Queries that hold at least one registered triplet; their cost rows get
  // the penalty. Ordered for deterministic iteration.
  const std::set<int>& locked_queries() const { return locked_; }

  std::size_t size() const { return map_.size(); }
  void reset();

 private:
  std::unordered_map<TripletKey, int, TripletKeyHash> map_;
  std::set<int> locked_;
};

struct Assignment {
  int query = 0;
  int gt = 0;
  bool forced = false;
};

struct MatchResult {
  std::vector<Assignment> assignments;  // sorted by gt index; injective both ways
  std::vector<int> background_queries;  // emitted queries left unassigned
  std::vector<int> collision_gts;       // gt that lost a forced collision and were re-solved
};

// Minimum-cost assignment of every column to a distinct row. Requires
// rows >= cols and finite entries. Ties resolve to the lowest row index.
// Returns (row, col) pairs in column order.
std::vector<std::pair<int, int>> hungarian(const CostMatrix& costs);

// One frame of temporally constrained matching:
//   1. ground truth whose key is already registered is force-assigned to its
//      registered query and bypasses the solver;
//   2. every registered query's row carries +penalty, repelling new triplets
//      while those rows stay available as a last resort under scarcity;
//   3. the remaining ground truth is solved by hungarian();
//   4. newly matched pairs are registered;
//   5. leftover queries are reported for background supervision.
// A registry collision (two present triplets registered to one query) keeps
// the cheaper one forced and returns the other to the solver pool, recorded
// in collision_gts.
MatchResult match_frame(const FramePrediction& preds, const FrameGroundTruth& gt,
                        const CostWeights& weights, TripletRegistry& registry,
                        double penalty = 1e6);

// Stateful per-stream driver: verifies (video_id, frame_idx) alignment of the
// two streams and resets the registry whenever the video changes. Frames must
// arrive grouped by video in increasing frame order.
class VideoMatcher {
 public:
  VideoMatcher(const CostWeights& weights, double penalty)
      : weights_(weights), penalty_(penalty) {}

  MatchResult push(const FramePrediction& preds, const FrameGroundTruth& gt);
  const TripletRegistry& registry() const { return registry_; }

 private:
  CostWeights weights_;
  double penalty_;
  TripletRegistry registry_;
  std::string current_video_;
  int last_frame_ = -1;
};

// Whole-span convenience over VideoMatcher (may cover several videos).
std::vector<MatchResult> match_video(std::span<const FramePrediction> preds,
                                     std::span<const FrameGroundTruth> gts,
                                     const CostWeights& weights, double penalty = 1e6);

}  // namespace tcdsg
