#include "tcdsg/pseudo_id.hpp"

#include <algorithm>

#include "tcdsg/errors.hpp"

namespace tcdsg {

PseudoIdAssigner::PseudoIdAssigner(double iou_thresh) : iou_thresh_(iou_thresh) {
  if (iou_thresh <= 0.0 || iou_thresh > 1.0) {
    throw ValidationError("pseudo-id: IoU threshold must lie in (0,1]");
  }
}

FrameGroundTruth PseudoIdAssigner::relabel(FrameGroundTruth frame) {
  if (frame.video_id != current_video_) {
    current_video_ = frame.video_id;
    previous_.clear();
  }

  // Gather this frame's unique detections. The same physical box may appear
  // in several triplets (as subject in one, object in another); it is one
  // detection and receives one id.
  struct Ref {
    bool object = false;   // subject vs object slot
    std::size_t triplet = 0;
  };
  std::vector<Detection> current;
  std::vector<std::vector<Ref>> refs;
  auto find_or_add = [&](int cls, const Box& box) -> std::size_t {
    for (std::size_t d = 0; d < current.size(); ++d) {
      if (current[d].cls == cls && current[d].box == box) return d;
    }
    current.push_back(Detection{cls, box, -1});
    refs.emplace_back();
    return current.size() - 1;
  };
  for (std::size_t t = 0; t < frame.triplets.size(); ++t) {
    const GtTriplet& trip = frame.triplets[t];
    refs[find_or_add(trip.subject.cls, trip.subject.box)].push_back(Ref{false, t});
    if (trip.object) {
      refs[find_or_add(trip.object->cls, trip.object->box)].push_back(Ref{true, t});
    }
  }

  // Greedy highest-IoU matching against the previous frame, within class.
  // Ties break toward the earlier current detection, then the earlier
  // previous one.
  struct Candidate {
    double overlap = 0.0;
    std::size_t cur = 0;
    std::size_t prev = 0;
  };
  std::vector<Candidate> candidates;
  for (std::size_t c = 0; c < current.size(); ++c) {
    for (std::size_t p = 0; p < previous_.size(); ++p) {
      if (current[c].cls != previous_[p].cls) continue;
      const double overlap = iou(current[c].box, previous_[p].box);
      if (overlap >= iou_thresh_) candidates.push_back(Candidate{overlap, c, p});
    }
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const Candidate& a, const Candidate& b) {
                     if (a.overlap != b.overlap) return a.overlap > b.overlap;
                     if (a.cur != b.cur) return a.cur < b.cur;
                     return a.prev < b.prev;
                   });
  std::vector<char> cur_taken(current.size(), 0);
  std::vector<char> prev_taken(previous_.size(), 0);
  for (const Candidate& cand : candidates) {
    if (cur_taken[cand.cur] || prev_taken[cand.prev]) continue;
    current[cand.cur].id = previous_[cand.prev].id;
    cur_taken[cand.cur] = 1;
    prev_taken[cand.prev] = 1;
  }
  for (Detection& det : current) {
    if (det.id < 0) det.id = next_id_++;
  }

  for (std::size_t d = 0; d < current.size(); ++d) {
    for (const Ref& ref : refs[d]) {
      GtTriplet& trip = frame.triplets[ref.triplet];
      if (ref.object) {
        trip.object->id = current[d].id;
      } else {
        trip.subject.id = current[d].id;
      }
    }
  }

  previous_ = std::move(current);
  return frame;
}

std::vector<FrameGroundTruth> assign_ids(std::span<const FrameGroundTruth> frames,
                                         double iou_thresh) {
  PseudoIdAssigner assigner(iou_thresh);
  std::vector<FrameGroundTruth> out;
  out.reserve(frames.size());
  for (const FrameGroundTruth& f : frames) out.push_back(assigner.relabel(f));
  return out;
}

}  // namespace tcdsg
