#include "tcdsg/assembler.hpp"

#include <algorithm>
#include <string>

#include "tcdsg/errors.hpp"

namespace tcdsg {

namespace {

int argmax(std::span<const double> values) {
  return static_cast<int>(std::max_element(values.begin(), values.end()) - values.begin());
}

void check_dims(const QueryPrediction& qp, const RelationVocab& vocab) {
  if (static_cast<int>(qp.subject_probs.size()) != vocab.num_subject_classes() + 1 ||
      static_cast<int>(qp.object_probs.size()) != vocab.num_object_classes() + 1 ||
      static_cast<int>(qp.relation_probs.size()) != vocab.num_relation_classes()) {
    throw ValidationError("prediction distributions do not match the vocabulary sizes");
  }
}

Box lerp_box(const Box& a, const Box& b, double t) {
  return Box{a.x1 + (b.x1 - a.x1) * t, a.y1 + (b.y1 - a.y1) * t, a.x2 + (b.x2 - a.x2) * t,
             a.y2 + (b.y2 - a.y2) * t};
}

}  // namespace

double confidence(const QueryPrediction& qp, const RelationVocab& vocab) {
  check_dims(qp, vocab);
  const double subject_factor = *std::max_element(qp.subject_probs.begin(), qp.subject_probs.end());
  const int rel = argmax(qp.relation_probs);
  const double relation_factor = qp.relation_probs[static_cast<std::size_t>(rel)];
  double conf = subject_factor * relation_factor;
  if (!vocab.objectless(rel)) {
    // background (last slot) is not a rankable object class
    const double object_factor = *std::max_element(qp.object_probs.begin(),
                                                   qp.object_probs.end() - 1);
    conf *= object_factor;
  }
  return conf;
}

std::vector<SelectedPrediction> select_topk(const FramePrediction& frame, int k,
                                            const RelationVocab& vocab) {
  if (k < 1) throw ValidationError("select_topk: k must be at least 1");
  std::vector<SelectedPrediction> selected;
  selected.reserve(frame.predictions.size());
  for (const QueryPrediction& qp : frame.predictions) {
    check_dims(qp, vocab);
    const int sub = argmax(qp.subject_probs);
    if (sub == vocab.subject_background()) continue;
    SelectedPrediction sp;
    sp.query = qp.query;
    sp.triplet.subject_cls = sub;
    sp.triplet.relation = argmax(qp.relation_probs);
    if (!vocab.objectless(sp.triplet.relation)) {
      sp.triplet.object_cls = static_cast<int>(
          std::max_element(qp.object_probs.begin(), qp.object_probs.end() - 1) -
          qp.object_probs.begin());
      sp.object_box = qp.object_box;
    }
    sp.confidence = confidence(qp, vocab);
    sp.subject_box = qp.subject_box;
    selected.push_back(std::move(sp));
  }
  std::sort(selected.begin(), selected.end(),
            [](const SelectedPrediction& a, const SelectedPrediction& b) {
              if (a.confidence != b.confidence) return a.confidence > b.confidence;
              return a.query < b.query;
            });
  if (static_cast<int>(selected.size()) > k) selected.resize(static_cast<std::size_t>(k));
  return selected;
}

struct TrackletAssembler::OpenRun {
  int query = 0;
  TripletLabels triplet;
  int start = 0;
  int last = 0;
  std::vector<Box> subject_boxes;
  std::vector<Box> object_boxes;
  std::vector<double> confidences;
};

TrackletAssembler::TrackletAssembler(const RelationVocab& vocab, int topk, int gap_tolerance)
    : vocab_(vocab), topk_(topk), gap_tolerance_(gap_tolerance) {
  if (topk < 1) throw ValidationError("TrackletAssembler: topk must be at least 1");
  if (gap_tolerance < 0) throw ValidationError("TrackletAssembler: gap_tolerance must be >= 0");
}

void TrackletAssembler::close_run(OpenRun& run) {
  Tracklet t;
  t.video_id = current_video_;
  t.triplet = run.triplet;
  t.interval = Interval{run.start, run.last};
  t.subject_boxes = std::move(run.subject_boxes);
  t.object_boxes = std::move(run.object_boxes);
  double sum = 0.0;
  for (const double c : run.confidences) sum += c;
  t.score = run.confidences.empty() ? 0.0 : sum / static_cast<double>(run.confidences.size());
  t.query = run.query;
  done_.push_back(std::move(t));
}

void TrackletAssembler::flush_video() {
  for (auto& run : open_runs_) close_run(run);
  open_runs_.clear();
}

void TrackletAssembler::push_frame(const FramePrediction& frame) {
  if (!in_video_ || frame.video_id != current_video_) {
    flush_video();
    current_video_ = frame.video_id;
    last_frame_ = -1;
    in_video_ = true;
  } else if (frame.frame_idx <= last_frame_) {
    throw ValidationError("video '" + frame.video_id + "': frames out of order (" +
                          std::to_string(frame.frame_idx) + " after " +
                          std::to_string(last_frame_) + ")");
  }
  last_frame_ = frame.frame_idx;
  const int f = frame.frame_idx;

  std::vector<SelectedPrediction> selected = select_topk(frame, topk_, vocab_);
  std::sort(selected.begin(), selected.end(),
            [](const SelectedPrediction& a, const SelectedPrediction& b) {
              return a.query < b.query;
            });

  std::vector<OpenRun> next_runs;
  std::vector<char> consumed(selected.size(), 0);
  for (OpenRun& run : open_runs_) {
    const auto it = std::lower_bound(
        selected.begin(), selected.end(), run.query,
        [](const SelectedPrediction& sp, int q) { return sp.query < q; });
    const bool hit = it != selected.end() && it->query == run.query;
    const int gap = f - run.last - 1;
    if (hit && it->triplet == run.triplet && gap <= gap_tolerance_) {
      // bridge any tolerated absence with interpolated boxes
      for (int missing = run.last + 1; missing < f; ++missing) {
        const double t = static_cast<double>(missing - run.last) / (f - run.last);
        run.subject_boxes.push_back(lerp_box(run.subject_boxes.back(), it->subject_box, t));
        if (run.triplet.object_cls) {
          run.object_boxes.push_back(lerp_box(run.object_boxes.back(), *it->object_box, t));
        }
      }
      run.last = f;
      run.subject_boxes.push_back(it->subject_box);
      if (run.triplet.object_cls) run.object_boxes.push_back(*it->object_box);
      run.confidences.push_back(it->confidence);
      consumed[static_cast<std::size_t>(it - selected.begin())] = 1;
      next_runs.push_back(std::move(run));
    } else if (!hit && gap < gap_tolerance_) {
      // still within tolerance; keep waiting
      next_runs.push_back(std::move(run));
    } else {
      // absence past tolerance, a frame-index gap, or a changed triplet; the
      // unconsumed selection (if any) starts a fresh run below
      close_run(run);
    }
  }
  open_runs_ = std::move(next_runs);

  for (std::size_t s = 0; s < selected.size(); ++s) {
    if (consumed[s]) continue;
    const SelectedPrediction& sp = selected[s];
    OpenRun run;
    run.query = sp.query;
    run.triplet = sp.triplet;
    run.start = f;
    run.last = f;
    run.subject_boxes.push_back(sp.subject_box);
    if (sp.triplet.object_cls) run.object_boxes.push_back(*sp.object_box);
    run.confidences.push_back(sp.confidence);
    open_runs_.push_back(std::move(run));
  }
}

std::vector<Tracklet> TrackletAssembler::finish() {
  flush_video();
  in_video_ = false;
  current_video_.clear();
  std::sort(done_.begin(), done_.end(), [](const Tracklet& a, const Tracklet& b) {
    if (a.video_id != b.video_id) return a.video_id < b.video_id;
    if (a.interval.start != b.interval.start) return a.interval.start < b.interval.start;
    if (a.interval.end != b.interval.end) return a.interval.end < b.interval.end;
    return a.query < b.query;
  });
  return std::move(done_);
}

std::vector<Tracklet> assemble(std::span<const FramePrediction> frames, const RelationVocab& vocab,
                               int topk, int gap_tolerance) {
  TrackletAssembler assembler(vocab, topk, gap_tolerance);
  for (const auto& frame : frames) assembler.push_frame(frame);
  return assembler.finish();
}

}  // namespace tcdsg
