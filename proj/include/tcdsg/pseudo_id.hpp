#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "tcdsg/schema.hpp"

namespace tcdsg {

// Assigns persistent instance ids to un-identified ground-truth detections
// by greedy highest-IoU matching against the previous frame, per class.
// Memory is one frame deep: an instance that leaves and returns gets a new
// id. Ids are drawn from one monotonically increasing counter, so they never
// collide across classes or videos. Existing ids on the input are ignored
// and overwritten.
class PseudoIdAssigner {
 public:
  explicit PseudoIdAssigner(double iou_thresh = 0.5);

  // Frames must arrive grouped by video in increasing frame order.
  FrameGroundTruth relabel(FrameGroundTruth frame);

  std::int64_t ids_assigned() const { return next_id_; }

 private:
  struct Detection {
    int cls = 0;
    Box box;
    std::int64_t id = 0;
  };

  double iou_thresh_;
  std::int64_t next_id_ = 0;
  std::string current_video_;
  std::vector<Detection> previous_;
};

// Whole-span convenience (may cover several videos).
std::vector<FrameGroundTruth> assign_ids(std::span<const FrameGroundTruth> frames,
                                         double iou_thresh = 0.5);

}  // namespace tcdsg
