#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tcdsg/geometry.hpp"

namespace tcdsg {

struct RelationClass {
  std::string name;
  bool objectless = false;  // relation has no object participant
};

// Class vocabulary shared by ground truth, predictions and reports.
// The last index of a subject/object probability vector is the background
// slot and is not listed here.
struct RelationVocab {
  std::vector<std::string> object_classes;
  std::vector<std::string> subject_classes;
  std::vector<RelationClass> relation_classes;

  int num_object_classes() const { return static_cast<int>(object_classes.size()); }
  int num_subject_classes() const { return static_cast<int>(subject_classes.size()); }
  int num_relation_classes() const { return static_cast<int>(relation_classes.size()); }

  int subject_background() const { return num_subject_classes(); }
  int object_background() const { return num_object_classes(); }

  bool objectless(int relation) const {
    return relation_classes.at(static_cast<std::size_t>(relation)).objectless;
  }
};

// One participant of a ground-truth triplet. The instance id may be absent
// on raw streams that have not been pseudo-labeled yet.
struct GtEntity {
  std::optional<std::int64_t> id;
  int cls = 0;
  Box box;
};

struct GtTriplet {
  GtEntity subject;
  std::optional<GtEntity> object;  // absent for objectless relations
  int relation = 0;

  bool objectless() const { return !object.has_value(); }
};

struct FrameGroundTruth {
  std::string video_id;
  int frame_idx = 0;
  double width = 0.0;   // pixels, used to normalize boxes on ingestion
  double height = 0.0;
  std::vector<GtTriplet> triplets;
};

struct QueryPrediction {
  int query = 0;
  std::vector<double> subject_probs;   // over subject classes + background
  std::vector<double> object_probs;    // over object classes + background
  std::vector<double> relation_probs;  // over relation classes
  Box subject_box;
  Box object_box;
  std::optional<Box> union_box;
};

struct FramePrediction {
  std::string video_id;
  int frame_idx = 0;
  std::vector<QueryPrediction> predictions;
};

struct TripletLabels {
  int subject_cls = 0;
  std::optional<int> object_cls;  // absent for objectless relations
  int relation = 0;

  friend bool operator==(const TripletLabels& a, const TripletLabels& b) = default;
};

// Temporally contiguous run of one (query, triplet) pair with per-frame
// boxes. Ground-truth tracklets use query = -1.
struct Tracklet {
  std::string video_id;
  TripletLabels triplet;
  Interval interval;
  std::vector<Box> subject_boxes;  // one per frame of the interval
  std::vector<Box> object_boxes;   // empty when the relation is objectless
  double score = 0.0;              // mean per-frame confidence
  int query = -1;
};

struct MetricsConfig {
  enum class FrameAveraging { kPerFrame, kMicro };
  enum class TrackletAveraging { kPerVideo, kMicro };

  std::vector<int> k_values{20, 50};
  double spatial_iou_threshold = 0.5;
  double temporal_iou_threshold = 0.5;
  FrameAveraging frame_averaging = FrameAveraging::kPerFrame;
  TrackletAveraging tracklet_averaging = TrackletAveraging::kPerVideo;
};

// Throws ValidationError if the vocabulary violates its invariants
// (duplicate names within a list, empty class names).
void validate(const RelationVocab& vocab);

}  // namespace tcdsg
