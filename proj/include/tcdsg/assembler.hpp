#pragma once

#include <optional>
#include <span>
#include <vector>

#include "tcdsg/schema.hpp"

namespace tcdsg {

// A prediction reduced to its argmax triplet, as ranked at inference time.
struct SelectedPrediction {
  int query = 0;
  TripletLabels triplet;
  double confidence = 0.0;
  Box subject_box;
  std::optional<Box> object_box;  // absent when the argmax relation is objectless
};

// Product of the per-branch maxima: max subject prob x max non-background
// object prob x max relation prob. The object factor is omitted when the
// argmax relation is objectless.
double confidence(const QueryPrediction& qp, const RelationVocab& vocab);

// The k most confident predictions of the frame, background-subject ones
// excluded before ranking. Ties order by lower query index.
std::vector<SelectedPrediction> select_topk(const FramePrediction& frame, int k,
                                            const RelationVocab& vocab);

// Groups a video's selected predictions into tracklets: a maximal run of
// consecutive frames in which one query keeps the same triplet becomes one
// tracklet. A query absent from the top-k, a frame gap, or a changed triplet
// all start a new tracklet. gap_tolerance > 0 bridges absences of at most
// that many frames with linearly interpolated boxes (bridged frames carry no
// confidence and do not enter the score mean).
class TrackletAssembler {
 public:
  TrackletAssembler(const RelationVocab& vocab, int topk, int gap_tolerance = 0);

  // Frames must arrive in strictly increasing frame order; a new video_id
  // flushes the previous video.
  void push_frame(const FramePrediction& frame);

  // Flushes all open runs and returns every tracklet assembled so far,
  // sorted by (video_id, t_start, t_end, query).
  std::vector<Tracklet> finish();

 private:
  struct OpenRun;
  void close_run(OpenRun& run);
  void flush_video();

  const RelationVocab& vocab_;
  int topk_;
  int gap_tolerance_;
  std::string current_video_;
  int last_frame_ = -1;
  bool in_video_ = false;
  std::vector<OpenRun> open_runs_;
  std::vector<Tracklet> done_;
};

// Whole-span convenience (may cover several videos).
std::vector<Tracklet> assemble(std::span<const FramePrediction> frames, const RelationVocab& vocab,
                               int topk, int gap_tolerance = 0);

}  // namespace tcdsg
