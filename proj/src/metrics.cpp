#include "tcdsg/metrics.hpp"

#include <algorithm>
#include <string>
#include <tuple>
#include <unordered_map>

#include "tcdsg/errors.hpp"
#include "tcdsg/temporal_matcher.hpp"

namespace tcdsg {

namespace {

bool classes_match(const SelectedPrediction& sp, const GtTriplet& gt) {
  if (sp.triplet.subject_cls != gt.subject.cls) return false;
  if (sp.triplet.relation != gt.relation) return false;
  if (gt.object.has_value() != sp.triplet.object_cls.has_value()) return false;
  return !gt.object || *sp.triplet.object_cls == gt.object->cls;
}

void validate_config(const MetricsConfig& config) {
  if (config.k_values.empty()) throw ValidationError("metrics: k_values must be nonempty");
  int prev = 0;
  for (const int k : config.k_values) {
    if (k <= prev) throw ValidationError("metrics: k_values must be positive and ascending");
    prev = k;
  }
  auto in_unit = [](double t) { return t > 0.0 && t <= 1.0; };
  if (!in_unit(config.spatial_iou_threshold) || !in_unit(config.temporal_iou_threshold)) {
    throw ValidationError("metrics: IoU thresholds must lie in (0,1]");
  }
}

// Canonical ranking of predicted tracklets for top-K selection.
void sort_by_score(std::vector<Tracklet>& tracks) {
  std::sort(tracks.begin(), tracks.end(), [](const Tracklet& a, const Tracklet& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.interval.start != b.interval.start) return a.interval.start < b.interval.start;
    if (a.interval.end != b.interval.end) return a.interval.end < b.interval.end;
    return a.query < b.query;
  });
}

// Greedy score-ordered one-to-one matching of the K best predictions.
long match_tracklets_topk(std::span<const Tracklet> ranked_preds,
                          std::span<const Tracklet> gt_tracks, int k, const MetricsConfig& config,
                          std::vector<char>* gt_matched_out = nullptr) {
  std::vector<char> gt_matched(gt_tracks.size(), 0);
  long matched = 0;
  const std::size_t limit = std::min(ranked_preds.size(), static_cast<std::size_t>(k));
  for (std::size_t p = 0; p < limit; ++p) {
    for (std::size_t g = 0; g < gt_tracks.size(); ++g) {
      if (gt_matched[g]) continue;
      if (tracklet_match_eligible(ranked_preds[p], gt_tracks[g], config.temporal_iou_threshold,
                                  config.spatial_iou_threshold)) {
        gt_matched[g] = 1;
        ++matched;
        break;
      }
    }
  }
  if (gt_matched_out != nullptr) *gt_matched_out = std::move(gt_matched);
  return matched;
}

}  // namespace

FrameRecallOutcome frame_recall(const FrameGroundTruth& gt,
                                std::span<const SelectedPrediction> selected, double iou_thresh) {
  FrameRecallOutcome outcome;
  outcome.gt_matched.assign(gt.triplets.size(), 0);
  for (const SelectedPrediction& sp : selected) {
    for (std::size_t j = 0; j < gt.triplets.size(); ++j) {
      if (outcome.gt_matched[j]) continue;
      const GtTriplet& t = gt.triplets[j];
      if (!classes_match(sp, t)) continue;
      if (iou(sp.subject_box, t.subject.box) < iou_thresh) continue;
      if (t.object && iou(*sp.object_box, t.object->box) < iou_thresh) continue;
      outcome.gt_matched[j] = 1;
      ++outcome.matched;
      break;
    }
  }
  return outcome;
}

std::vector<Tracklet> gt_tracklets(std::span<const FrameGroundTruth> video_frames) {
  struct OpenRun {
    TripletLabels triplet;
    int start = 0;
    int last = 0;
    std::vector<Box> subject_boxes;
    std::vector<Box> object_boxes;
  };

  std::vector<Tracklet> done;
  if (video_frames.empty()) return done;
  const std::string& video_id = video_frames.front().video_id;

  std::map<std::tuple<std::int64_t, std::int64_t, int>, OpenRun> open;
  auto close = [&](OpenRun& run) {
    Tracklet t;
    t.video_id = video_id;
    t.triplet = run.triplet;
    t.interval = Interval{run.start, run.last};
    t.subject_boxes = std::move(run.subject_boxes);
    t.object_boxes = std::move(run.object_boxes);
    t.score = 1.0;
    t.query = -1;
    done.push_back(std::move(t));
  };

  int last_frame = -1;
  bool first = true;
  for (const FrameGroundTruth& frame : video_frames) {
    if (frame.video_id != video_id) {
      throw ValidationError("gt_tracklets: frames span more than one video");
    }
    const bool contiguous = !first && frame.frame_idx == last_frame + 1;
    if (!contiguous) {
      for (auto& [key, run] : open) close(run);
      open.clear();
    }
    first = false;
    last_frame = frame.frame_idx;

    std::map<std::tuple<std::int64_t, std::int64_t, int>, const GtTriplet*> present;
    for (const GtTriplet& t : frame.triplets) {
      if (!t.subject.id || (t.object && !t.object->id)) {
        throw ValidationError("gt_tracklets: video '" + video_id + "' frame " +
                              std::to_string(frame.frame_idx) +
                              ": instance ids required (run pseudo-label first)");
      }
      const auto key = std::make_tuple(*t.subject.id,
                                       t.object ? *t.object->id : TripletKey::kNoObject,
                                       t.relation);
      if (!present.emplace(key, &t).second) {
        throw ValidationError("gt_tracklets: video '" + video_id + "' frame " +
                              std::to_string(frame.frame_idx) + ": duplicate triplet key");
      }
    }

    // close runs whose key vanished this frame
    for (auto it = open.begin(); it != open.end();) {
      if (present.count(it->first) == 0) {
        close(it->second);
        it = open.erase(it);
      } else {
        ++it;
      }
    }
    // extend or start runs for the present keys
    for (const auto& [key, triplet] : present) {
      auto it = open.find(key);
      if (it == open.end()) {
        OpenRun run;
        run.triplet.subject_cls = triplet->subject.cls;
        if (triplet->object) run.triplet.object_cls = triplet->object->cls;
        run.triplet.relation = triplet->relation;
        run.start = frame.frame_idx;
        it = open.emplace(key, std::move(run)).first;
      }
      OpenRun& run = it->second;
      run.last = frame.frame_idx;
      run.subject_boxes.push_back(triplet->subject.box);
      if (triplet->object) run.object_boxes.push_back(triplet->object->box);
    }
  }
  for (auto& [key, run] : open) close(run);

  std::sort(done.begin(), done.end(), [](const Tracklet& a, const Tracklet& b) {
    if (a.interval.start != b.interval.start) return a.interval.start < b.interval.start;
    if (a.interval.end != b.interval.end) return a.interval.end < b.interval.end;
    if (a.triplet.subject_cls != b.triplet.subject_cls) {
      return a.triplet.subject_cls < b.triplet.subject_cls;
    }
    return a.triplet.relation < b.triplet.relation;
  });
  return done;
}

bool tracklet_match_eligible(const Tracklet& pred, const Tracklet& gt, double temporal_thresh,
                             double spatial_thresh) {
  if (!(pred.triplet == gt.triplet)) return false;
  if (temporal_iou(pred.interval, gt.interval) < temporal_thresh) return false;
  const int lo = std::max(pred.interval.start, gt.interval.start);
  const int hi = std::min(pred.interval.end, gt.interval.end);
  if (lo > hi) return false;

  double sub_sum = 0.0, obj_sum = 0.0;
  for (int f = lo; f <= hi; ++f) {
    const auto pi = static_cast<std::size_t>(f - pred.interval.start);
    const auto gi = static_cast<std::size_t>(f - gt.interval.start);
    sub_sum += iou(pred.subject_boxes.at(pi), gt.subject_boxes.at(gi));
    if (gt.triplet.object_cls) {
      obj_sum += iou(pred.object_boxes.at(pi), gt.object_boxes.at(gi));
    }
  }
  const double n = static_cast<double>(hi - lo + 1);
  if (sub_sum / n < spatial_thresh) return false;
  if (gt.triplet.object_cls && obj_sum / n < spatial_thresh) return false;
  return true;
}

Evaluator::Evaluator(const MetricsConfig& config, const RelationVocab& vocab)
    : config_(config), vocab_(vocab) {
  validate_config(config_);
}

Evaluator::VideoStats Evaluator::evaluate_video(std::span<const FrameGroundTruth> gt,
                                                std::span<const FramePrediction> preds,
                                                std::span<const Tracklet> pred_tracklets) const {
  if (gt.size() != preds.size()) {
    throw ValidationError("evaluate_video: gt and prediction streams have different lengths");
  }
  VideoStats stats;
  const int k_max = config_.k_values.back();
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const FrameGroundTruth& g = gt[i];
    const FramePrediction& p = preds[i];
    if (g.video_id != p.video_id || g.frame_idx != p.frame_idx) {
      throw ValidationError("evaluate_video: stream alignment mismatch at video '" + g.video_id +
                            "' frame " + std::to_string(g.frame_idx));
    }
    ++stats.frames;
    if (g.triplets.empty()) continue;
    ++stats.frames_with_gt;
    const long n_gt = static_cast<long>(g.triplets.size());
    stats.gt_instances += n_gt;
    for (const GtTriplet& t : g.triplets) ++stats.per_predicate[t.relation].gt_count;

    const std::vector<SelectedPrediction> selected = select_topk(p, k_max, vocab_);
    for (const int k : config_.k_values) {
      const std::size_t take = std::min(selected.size(), static_cast<std::size_t>(k));
      const auto outcome =
          frame_recall(g, std::span(selected.data(), take), config_.spatial_iou_threshold);
      stats.frame_recall_sum[k] += static_cast<double>(outcome.matched) / n_gt;
      stats.frame_matched[k] += outcome.matched;
      for (std::size_t j = 0; j < g.triplets.size(); ++j) {
        if (outcome.gt_matched[j]) ++stats.per_predicate[g.triplets[j].relation].matched[k];
      }
    }
  }

  const std::vector<Tracklet> gt_tracks = gt_tracklets(gt);
  stats.gt_tracklet_count = static_cast<long>(gt_tracks.size());
  stats.pred_tracklet_count = static_cast<long>(pred_tracklets.size());
  std::vector<Tracklet> ranked(pred_tracklets.begin(), pred_tracklets.end());
  sort_by_score(ranked);
  for (const int k : config_.k_values) {
    stats.tracklet_matched[k] = match_tracklets_topk(ranked, gt_tracks, k, config_);
  }
  return stats;
}

void Evaluator::merge(const VideoStats& stats) {
  ++videos_;
  total_.frames += stats.frames;
  total_.frames_with_gt += stats.frames_with_gt;
  total_.gt_instances += stats.gt_instances;
  for (const auto& [k, v] : stats.frame_recall_sum) total_.frame_recall_sum[k] += v;
  for (const auto& [k, v] : stats.frame_matched) total_.frame_matched[k] += v;
  for (const auto& [rel, tally] : stats.per_predicate) {
    auto& dst = total_.per_predicate[rel];
    dst.gt_count += tally.gt_count;
    for (const auto& [k, v] : tally.matched) dst.matched[k] += v;
  }
  total_.gt_tracklet_count += stats.gt_tracklet_count;
  total_.pred_tracklet_count += stats.pred_tracklet_count;
  for (const auto& [k, v] : stats.tracklet_matched) total_.tracklet_matched[k] += v;
  if (stats.gt_tracklet_count > 0) {
    ++videos_with_gt_tracklets_;
    for (const int k : config_.k_values) {
      const auto it = stats.tracklet_matched.find(k);
      const long matched = it == stats.tracklet_matched.end() ? 0 : it->second;
      tracklet_recall_sum_[k] +=
          static_cast<double>(matched) / static_cast<double>(stats.gt_tracklet_count);
    }
  }
}

MetricsReport Evaluator::report() const {
  MetricsReport rep;
  rep.config = config_;
  rep.counts.videos = videos_;
  rep.counts.frames = total_.frames;
  rep.counts.frames_with_gt = total_.frames_with_gt;
  rep.counts.gt_instances = total_.gt_instances;
  rep.counts.gt_tracklets = total_.gt_tracklet_count;
  rep.counts.pred_tracklets = total_.pred_tracklet_count;

  for (const int k : config_.k_values) {
    const auto ratio_it = total_.frame_recall_sum.find(k);
    const double ratio_sum = ratio_it == total_.frame_recall_sum.end() ? 0.0 : ratio_it->second;
    const auto matched_it = total_.frame_matched.find(k);
    const long matched = matched_it == total_.frame_matched.end() ? 0 : matched_it->second;
    rep.counts.frame_matched[k] = matched;
    if (config_.frame_averaging == MetricsConfig::FrameAveraging::kPerFrame) {
      rep.recall[k] = total_.frames_with_gt > 0
                          ? ratio_sum / static_cast<double>(total_.frames_with_gt)
                          : 0.0;
    } else {
      rep.recall[k] = total_.gt_instances > 0
                          ? static_cast<double>(matched) / static_cast<double>(total_.gt_instances)
                          : 0.0;
    }

    double mr_sum = 0.0;
    long mr_classes = 0;
    for (const auto& [rel, tally] : total_.per_predicate) {
      if (tally.gt_count <= 0) continue;
      const auto mit = tally.matched.find(k);
      const long m = mit == tally.matched.end() ? 0 : mit->second;
      mr_sum += static_cast<double>(m) / static_cast<double>(tally.gt_count);
      ++mr_classes;
    }
    rep.mean_recall[k] = mr_classes > 0 ? mr_sum / static_cast<double>(mr_classes) : 0.0;

    const auto tit = total_.tracklet_matched.find(k);
    const long t_matched = tit == total_.tracklet_matched.end() ? 0 : tit->second;
    rep.counts.tracklet_matched[k] = t_matched;
    if (config_.tracklet_averaging == MetricsConfig::TrackletAveraging::kPerVideo) {
      const auto rit = tracklet_recall_sum_.find(k);
      const double rsum = rit == tracklet_recall_sum_.end() ? 0.0 : rit->second;
      rep.temporal_recall[k] =
          videos_with_gt_tracklets_ > 0 ? rsum / static_cast<double>(videos_with_gt_tracklets_)
                                        : 0.0;
    } else {
      rep.temporal_recall[k] = total_.gt_tracklet_count > 0
                                   ? static_cast<double>(t_matched) /
                                         static_cast<double>(total_.gt_tracklet_count)
                                   : 0.0;
    }
  }

  for (const auto& [rel, tally] : total_.per_predicate) {
    MetricsReport::Predicate p;
    p.gt_count = tally.gt_count;
    for (const int k : config_.k_values) {
      const auto mit = tally.matched.find(k);
      const long m = mit == tally.matched.end() ? 0 : mit->second;
      p.matched[k] = m;
      p.recall[k] =
          tally.gt_count > 0 ? static_cast<double>(m) / static_cast<double>(tally.gt_count) : 0.0;
    }
    rep.per_predicate[rel] = std::move(p);
  }
  return rep;
}

namespace {

// Splits aligned streams into per-video chunks and runs the evaluator.
MetricsReport evaluate_streams(std::span<const FrameGroundTruth> gt,
                               std::span<const FramePrediction> preds,
                               const MetricsConfig& config, const RelationVocab& vocab,
                               std::span<const Tracklet> pred_tracklets) {
  if (gt.size() != preds.size()) {
    throw ValidationError("evaluate: gt and prediction streams have different lengths");
  }
  std::unordered_map<std::string, std::vector<Tracklet>> tracks_by_video;
  for (const Tracklet& t : pred_tracklets) tracks_by_video[t.video_id].push_back(t);

  Evaluator evaluator(config, vocab);
  std::size_t begin = 0;
  while (begin < gt.size()) {
    std::size_t end = begin + 1;
    while (end < gt.size() && gt[end].video_id == gt[begin].video_id) ++end;
    const auto it = tracks_by_video.find(gt[begin].video_id);
    static const std::vector<Tracklet> kEmpty;
    const auto& tracks = it == tracks_by_video.end() ? kEmpty : it->second;
    evaluator.merge(evaluator.evaluate_video(gt.subspan(begin, end - begin),
                                             preds.subspan(begin, end - begin), tracks));
    begin = end;
  }
  return evaluator.report();
}

}  // namespace

std::map<int, double> recall_at_k(std::span<const FrameGroundTruth> gt,
                                  std::span<const FramePrediction> preds,
                                  const MetricsConfig& config, const RelationVocab& vocab) {
  return evaluate_streams(gt, preds, config, vocab, {}).recall;
}

std::map<int, double> mean_recall_at_k(std::span<const FrameGroundTruth> gt,
                                       std::span<const FramePrediction> preds,
                                       const MetricsConfig& config, const RelationVocab& vocab) {
  return evaluate_streams(gt, preds, config, vocab, {}).mean_recall;
}

std::map<int, double> temporal_recall_at_k(std::span<const Tracklet> gt_tracks,
                                           std::span<const Tracklet> pred_tracks,
                                           const MetricsConfig& config) {
  validate_config(config);
  std::map<std::string, std::pair<std::vector<Tracklet>, std::vector<Tracklet>>> by_video;
  for (const Tracklet& t : gt_tracks) by_video[t.video_id].first.push_back(t);
  for (const Tracklet& t : pred_tracks) by_video[t.video_id].second.push_back(t);

  std::map<int, double> ratio_sum;
  std::map<int, long> matched_total;
  long gt_total = 0;
  long videos_with_gt = 0;
  for (auto& [video, pair] : by_video) {
    auto& [gts, preds] = pair;
    if (gts.empty()) continue;
    ++videos_with_gt;
    gt_total += static_cast<long>(gts.size());
    sort_by_score(preds);
    for (const int k : config.k_values) {
      const long matched = match_tracklets_topk(preds, gts, k, config);
      matched_total[k] += matched;
      ratio_sum[k] += static_cast<double>(matched) / static_cast<double>(gts.size());
    }
  }
  std::map<int, double> out;
  for (const int k : config.k_values) {
    if (config.tracklet_averaging == MetricsConfig::TrackletAveraging::kPerVideo) {
      out[k] = videos_with_gt > 0 ? ratio_sum[k] / static_cast<double>(videos_with_gt) : 0.0;
    } else {
      out[k] = gt_total > 0 ? static_cast<double>(matched_total[k]) / static_cast<double>(gt_total)
                            : 0.0;
    }
  }
  return out;
}

}  // namespace tcdsg
