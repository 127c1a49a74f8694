#pragma once

#include <map>
#include <span>
#include <vector>

#include "tcdsg/assembler.hpp"
#include "tcdsg/schema.hpp"

namespace tcdsg {

struct MetricsReport {
  struct Predicate {
    long gt_count = 0;
    std::map<int, long> matched;   // K -> matched gt instances (frame level)
    std::map<int, double> recall;  // K -> per-predicate recall
  };
  struct Counts {
    long videos = 0;
    long frames = 0;
    long frames_with_gt = 0;
    long gt_instances = 0;
    long gt_tracklets = 0;
    long pred_tracklets = 0;
    std::map<int, long> frame_matched;     // K -> matched gt instances
    std::map<int, long> tracklet_matched;  // K -> matched gt tracklets
  };

  std::map<int, double> recall;           // R@K
  std::map<int, double> mean_recall;      // mR@K
  std::map<int, double> temporal_recall;  // tR@K
  std::map<int, Predicate> per_predicate; // keyed by relation class index
  Counts counts;
  MetricsConfig config;
};

struct FrameRecallOutcome {
  int matched = 0;
  std::vector<char> gt_matched;  // one flag per gt triplet
};

// Greedy one-to-one matching in confidence order: a prediction claims the
// first unmatched ground truth whose classes all agree and whose subject
// (and object, unless objectless) IoU reaches the threshold.
FrameRecallOutcome frame_recall(const FrameGroundTruth& gt,
                                std::span<const SelectedPrediction> selected, double iou_thresh);

// Maximal consecutive-frame runs of each triplet key in one video's ground
// truth. Requires instance ids. Returned tracklets carry query = -1 and
// score = 1.
std::vector<Tracklet> gt_tracklets(std::span<const FrameGroundTruth> video_frames);

// The three tracklet-level tests: equal triplet classes, temporal IoU at or
// above the temporal threshold, and mean per-frame box IoU over the
// overlapping frames at or above the spatial threshold (object skipped for
// objectless relations).
bool tracklet_match_eligible(const Tracklet& pred, const Tracklet& gt, double temporal_thresh,
                             double spatial_thresh);

// Streaming evaluation: videos are evaluated independently (safe to run in
// parallel) and merged in a deterministic order.
class Evaluator {
 public:
  struct PredicateTally {
    long gt_count = 0;
    std::map<int, long> matched;
  };
  struct VideoStats {
    long frames = 0;
    long frames_with_gt = 0;
    long gt_instances = 0;
    std::map<int, double> frame_recall_sum;  // K -> sum of per-frame ratios
    std::map<int, long> frame_matched;       // K -> matched gt instances
    std::map<int, PredicateTally> per_predicate;
    long gt_tracklet_count = 0;
    long pred_tracklet_count = 0;
    std::map<int, long> tracklet_matched;
  };

  Evaluator(const MetricsConfig& config, const RelationVocab& vocab);

  // One video's frames (aligned gt/pred) plus its predicted tracklets.
  VideoStats evaluate_video(std::span<const FrameGroundTruth> gt,
                            std::span<const FramePrediction> preds,
                            std::span<const Tracklet> pred_tracklets) const;

  void merge(const VideoStats& stats);
  MetricsReport report() const;

 private:
  MetricsConfig config_;
  const RelationVocab& vocab_;
  VideoStats total_;
  long videos_ = 0;
  long videos_with_gt_tracklets_ = 0;
  std::map<int, double> tracklet_recall_sum_;  // K -> sum of per-video ratios
};

// Spec-shaped conveniences over Evaluator (streams may span several videos;
// gt and pred frames must be aligned pairwise).
std::map<int, double> recall_at_k(std::span<const FrameGroundTruth> gt,
                                  std::span<const FramePrediction> preds,
                                  const MetricsConfig& config, const RelationVocab& vocab);
std::map<int, double> mean_recall_at_k(std::span<const FrameGroundTruth> gt,
                                       std::span<const FramePrediction> preds,
                                       const MetricsConfig& config, const RelationVocab& vocab);
std::map<int, double> temporal_recall_at_k(std::span<const Tracklet> gt_tracks,
                                           std::span<const Tracklet> pred_tracks,
                                           const MetricsConfig& config);

}  // namespace tcdsg
