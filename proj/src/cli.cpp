#include "tcdsg/cli.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <future>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "tcdsg/assembler.hpp"
#include "tcdsg/errors.hpp"
#include "tcdsg/losses.hpp"
#include "tcdsg/metrics.hpp"
#include "tcdsg/pseudo_id.hpp"
#include "tcdsg/schema_io.hpp"
#include "tcdsg/synth.hpp"
#include "tcdsg/temporal_matcher.hpp"

namespace tcdsg::cli {

namespace {

using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Shared plumbing

std::vector<int> parse_k_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stoi(item));
    } catch (const std::exception&) {
      throw ValidationError("invalid K value '" + item + "'");
    }
  }
  if (out.empty()) throw ValidationError("--k must list at least one value");
  return out;
}

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw ValidationError(path + ": invalid JSON");
  return doc;
}

Box box_from_json(const json& v, const std::string& where) {
  if (!v.is_array() || v.size() != 4 || !v[0].is_number() || !v[1].is_number() ||
      !v[2].is_number() || !v[3].is_number()) {
    throw ValidationError(where + ": box must be an array of 4 numbers");
  }
  Box b{v[0].get<double>(), v[1].get<double>(), v[2].get<double>(), v[3].get<double>()};
  if (!b.valid()) throw ValidationError(where + ": box violates x1<=x2, y1<=y2");
  return b;
}

std::vector<double> doubles_from_json(const json& v, const std::string& where) {
  if (!v.is_array() || v.empty()) throw ValidationError(where + ": expected a nonempty array");
  std::vector<double> out;
  out.reserve(v.size());
  for (const auto& e : v) {
    if (!e.is_number()) throw ValidationError(where + ": entries must be numbers");
    out.push_back(e.get<double>());
  }
  return out;
}

// Keep every subsample-th frame and compress frame indices so the kept
// frames stay consecutive.
template <typename Frame>
bool subsample_frame(Frame& frame, int factor) {
  if (factor <= 1) return true;
  if (frame.frame_idx % factor != 0) return false;
  frame.frame_idx /= factor;
  return true;
}

// Aligned (gt, pred) pump with optional subsampling.
class ZipReader {
 public:
  ZipReader(const std::string& gt_path, const std::string& pred_path, const RelationVocab* vocab,
            int subsample)
      : gt_(gt_path, vocab), pred_(pred_path, vocab), subsample_(subsample) {}

  std::optional<std::pair<FrameGroundTruth, FramePrediction>> next() {
    for (;;) {
      auto g = gt_.next();
      auto p = pred_.next();
      if (!g && !p) return std::nullopt;
      if (!g || !p) {
        const std::string side = p ? "predictions" : "ground truth";
        const std::string video = p ? p->video_id : g->video_id;
        const int frame = p ? p->frame_idx : g->frame_idx;
        throw ValidationError("stream alignment mismatch: unmatched trailing " + side +
                              " at video '" + video + "' frame " + std::to_string(frame));
      }
      if (g->video_id != p->video_id || g->frame_idx != p->frame_idx) {
        throw ValidationError("stream alignment mismatch: ground truth at video '" + g->video_id +
                              "' frame " + std::to_string(g->frame_idx) +
                              ", predictions at video '" + p->video_id + "' frame " +
                              std::to_string(p->frame_idx));
      }
      const bool keep_g = subsample_frame(*g, subsample_);
      subsample_frame(*p, subsample_);
      if (keep_g) return std::make_pair(std::move(*g), std::move(*p));
    }
  }

 private:
  GtReader gt_;
  PredReader pred_;
  int subsample_;
};

struct VideoBatch {
  std::string video_id;
  std::vector<FrameGroundTruth> gt;
  std::vector<FramePrediction> preds;
};

// Groups the zipped stream into whole-video batches.
class VideoBatcher {
 public:
  explicit VideoBatcher(ZipReader& zip) : zip_(zip) {}

  std::optional<VideoBatch> next() {
    if (!pending_) pending_ = zip_.next();
    if (!pending_) return std::nullopt;
    VideoBatch batch;
    batch.video_id = pending_->first.video_id;
    while (pending_ && pending_->first.video_id == batch.video_id) {
      batch.gt.push_back(std::move(pending_->first));
      batch.preds.push_back(std::move(pending_->second));
      pending_ = zip_.next();
    }
    return batch;
  }

 private:
  ZipReader& zip_;
  std::optional<std::pair<FrameGroundTruth, FramePrediction>> pending_;
};

// Bounded-concurrency map over a video stream; results keyed by video_id.
template <typename Result, typename Batch, typename Next, typename Job>
std::map<std::string, Result> process_videos(Next next_batch, Job job, int threads) {
  std::map<std::string, Result> results;
  if (threads <= 1) {
    while (auto batch = next_batch()) {
      std::string id = batch->video_id;
      results.emplace(std::move(id), job(std::move(*batch)));
    }
    return results;
  }
  std::deque<std::pair<std::string, std::future<Result>>> inflight;
  auto drain_one = [&]() {
    auto& front = inflight.front();
    results.emplace(std::move(front.first), front.second.get());
    inflight.pop_front();
  };
  while (auto batch = next_batch()) {
    std::string id = batch->video_id;
    inflight.emplace_back(std::move(id),
                          std::async(std::launch::async, job, std::move(*batch)));
    if (static_cast<int>(inflight.size()) >= threads) drain_one();
  }
  while (!inflight.empty()) drain_one();
  return results;
}

// ---------------------------------------------------------------------------
// synth

struct SynthArgs {
  std::uint64_t seed = 0;
  int frames = 50;
  int agents = 3;
  std::string script_path;
  int auto_entries = 0;
  int relations = 4;
  double jitter = 0.0;
  double flip = 0.0;
  double drop = 0.0;
  int nq = 10;
  bool emit_background = false;
  int videos = 1;
  std::string gt_out, pred_out, truth_out, vocab_out;
};

std::vector<ScriptEntry> load_script(const std::string& path) {
  json doc = load_json_file(path);
  if (!doc.is_array()) throw ValidationError(path + ": expected a JSON array of script entries");
  std::vector<ScriptEntry> script;
  for (const auto& e : doc) {
    if (!e.is_object()) throw ValidationError(path + ": script entries must be objects");
    ScriptEntry entry;
    entry.subject_agent = e.at("sub").get<int>();
    if (auto it = e.find("obj"); it != e.end() && !it->is_null()) {
      entry.object_agent = it->get<int>();
    }
    entry.relation = e.at("rel").get<int>();
    entry.interval = Interval{e.at("start").get<int>(), e.at("end").get<int>()};
    script.push_back(entry);
  }
  return script;
}

int cmd_synth(const SynthArgs& args) {
  if (args.videos < 1) throw ValidationError("--videos must be >= 1");
  if (args.script_path.empty() == (args.auto_entries == 0)) {
    throw ValidationError("provide exactly one of --script or --auto");
  }

  std::vector<ScriptEntry> file_script;
  std::vector<char> objectless_flags;
  int relation_count = args.relations;
  if (!args.script_path.empty()) {
    file_script = load_script(args.script_path);
    for (const auto& e : file_script) relation_count = std::max(relation_count, e.relation + 1);
    objectless_flags.assign(static_cast<std::size_t>(relation_count), 0);
    for (const auto& e : file_script) {
      if (!e.object_agent) objectless_flags[static_cast<std::size_t>(e.relation)] = 1;
    }
  } else {
    // fixed objectless partition so every generated video shares one vocabulary
    const int cut = relation_count == 1 ? 1 : std::max(1, (3 * relation_count) / 4);
    objectless_flags.assign(static_cast<std::size_t>(relation_count), 0);
    for (int r = cut; r < relation_count; ++r) objectless_flags[static_cast<std::size_t>(r)] = 1;
  }

  AtomicFile gt_file(args.gt_out);
  AtomicFile pred_file(args.pred_out);
  std::optional<AtomicFile> truth_file;
  if (!args.truth_out.empty()) truth_file.emplace(args.truth_out);
  std::optional<AtomicFile> vocab_file;
  if (!args.vocab_out.empty()) vocab_file.emplace(args.vocab_out);

  std::vector<Tracklet> all_truth;
  long total_frames = 0;
  RelationVocab vocab;
  for (int v = 0; v < args.videos; ++v) {
    SynthConfig config;
    config.seed = args.seed + static_cast<std::uint64_t>(v);
    config.frames = args.frames;
    config.agents = args.agents;
    config.script = !args.script_path.empty()
                        ? file_script
                        : auto_script(config.seed, args.agents, args.frames, args.auto_entries,
                                      relation_count);
    config.jitter_sigma = args.jitter;
    config.flip_prob = args.flip;
    config.drop_prob = args.drop;
    config.num_queries = args.nq;
    config.relation_classes = relation_count;
    config.objectless_relations = objectless_flags;
    config.emit_background = args.emit_background;

    SynthOutput out = generate(config);
    write_gt_stream(gt_file.stream(), out.gt);
    write_pred_stream(pred_file.stream(), out.predictions);
    all_truth.insert(all_truth.end(), out.truth.begin(), out.truth.end());
    total_frames += static_cast<long>(out.gt.size());
    vocab = std::move(out.vocab);
  }

  gt_file.commit();
  pred_file.commit();
  if (truth_file) {
    write_tracklets(truth_file->stream(), all_truth);
    truth_file->commit();
  }
  if (vocab_file) {
    write_vocab(vocab_file->stream(), vocab);
    vocab_file->commit();
  }
  std::cout << "synth: " << args.videos << " video(s), " << total_frames << " frames, "
            << all_truth.size() << " truth tracklets -> " << args.gt_out << ", " << args.pred_out
            << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// pseudo-label

int cmd_pseudo_label(const std::string& gt_path, double iou_thresh, const std::string& out_path) {
  GtReader reader(gt_path);
  PseudoIdAssigner assigner(iou_thresh);
  AtomicFile out(out_path);
  long frames = 0;
  while (auto frame = reader.next()) {
    out.stream() << to_jsonl_line(assigner.relabel(std::move(*frame))) << '\n';
    ++frames;
  }
  out.commit();
  std::cout << "pseudo-label: " << frames << " frames, " << assigner.ids_assigned()
            << " ids assigned -> " << out_path << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// match

struct MatchArgs {
  std::string gt_path, pred_path, out_path, vocab_path;
  double penalty = 1e6;
  CostWeights weights;
  int threads = 1;
};

struct MatchChunk {
  std::string lines;
  long frames = 0;
  long assignments = 0;
  long forced = 0;
  long collisions = 0;
};

void append_assign_line(MatchChunk& chunk, const FrameGroundTruth& gt, const MatchResult& result) {
  json line;
  line["video_id"] = gt.video_id;
  line["frame_idx"] = gt.frame_idx;
  json assign = json::array();
  for (const Assignment& a : result.assignments) {
    assign.push_back(json{{"q", a.query}, {"gt", a.gt}, {"forced", a.forced}});
    if (a.forced) ++chunk.forced;
  }
  line["assign"] = std::move(assign);
  line["background_queries"] = result.background_queries;
  if (!result.collision_gts.empty()) {
    line["collisions"] = result.collision_gts;
    chunk.collisions += static_cast<long>(result.collision_gts.size());
  }
  chunk.lines += line.dump();
  chunk.lines += '\n';
  ++chunk.frames;
  chunk.assignments += static_cast<long>(result.assignments.size());
}

int cmd_match(const MatchArgs& args) {
  std::optional<RelationVocab> vocab;
  if (!args.vocab_path.empty()) vocab = read_vocab(args.vocab_path);
  ZipReader zip(args.gt_path, args.pred_path, vocab ? &*vocab : nullptr, 1);

  std::map<std::string, MatchChunk> chunks;
  if (args.threads <= 1) {
    // frame-at-a-time streaming: memory stays bounded by one frame plus the
    // per-video registry
    VideoMatcher matcher(args.weights, args.penalty);
    while (auto pair = zip.next()) {
      const auto& [gt, preds] = *pair;
      MatchResult result = matcher.push(preds, gt);
      append_assign_line(chunks[gt.video_id], gt, result);
    }
  } else {
    VideoBatcher batcher(zip);
    chunks = process_videos<MatchChunk>(
        [&]() { return batcher.next(); },
        [&](VideoBatch batch) {
          VideoMatcher matcher(args.weights, args.penalty);
          MatchChunk chunk;
          for (std::size_t i = 0; i < batch.gt.size(); ++i) {
            append_assign_line(chunk, batch.gt[i], matcher.push(batch.preds[i], batch.gt[i]));
          }
          return chunk;
        },
        args.threads);
  }

  AtomicFile out(args.out_path);
  MatchChunk totals;
  for (const auto& [video, chunk] : chunks) {
    out.stream() << chunk.lines;
    totals.frames += chunk.frames;
    totals.assignments += chunk.assignments;
    totals.forced += chunk.forced;
    totals.collisions += chunk.collisions;
  }
  out.commit();
  std::cout << "match: " << chunks.size() << " video(s), " << totals.frames << " frames, "
            << totals.assignments << " assignments (" << totals.forced << " forced, "
            << totals.collisions << " collisions) -> " << args.out_path << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// assemble

struct AssembleArgs {
  std::string pred_path, vocab_path, out_path;
  int topk = 20;
  int gap = 0;
  int threads = 1;
};

int cmd_assemble(const AssembleArgs& args) {
  const RelationVocab vocab = read_vocab(args.vocab_path);

  PredReader reader(args.pred_path, &vocab);
  std::optional<FramePrediction> pending = reader.next();
  auto next_batch = [&]() -> std::optional<VideoBatch> {
    if (!pending) return std::nullopt;
    VideoBatch batch;
    batch.video_id = pending->video_id;
    while (pending && pending->video_id == batch.video_id) {
      batch.preds.push_back(std::move(*pending));
      pending = reader.next();
    }
    return batch;
  };

  auto results = process_videos<std::vector<Tracklet>>(
      next_batch,
      [&](VideoBatch batch) { return assemble(batch.preds, vocab, args.topk, args.gap); },
      args.threads);

  std::vector<Tracklet> all;
  long frames = 0;
  for (auto& [video, tracks] : results) {
    all.insert(all.end(), std::make_move_iterator(tracks.begin()),
               std::make_move_iterator(tracks.end()));
  }
  (void)frames;
  AtomicFile out(args.out_path);
  write_tracklets(out.stream(), all);
  out.commit();
  std::cout << "assemble: " << all.size() << " tracklets over " << results.size()
            << " video(s) -> " << args.out_path << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
  std::string gt_path, pred_path, tracklets_path, vocab_path, out_path;
  std::string k_list = "20,50";
  MetricsConfig metrics;
  int topk = 0;  // 0: use the largest K
  int gap = 0;
  int subsample = 1;
  int threads = 1;
};

json report_to_json(const MetricsReport& rep, const RelationVocab& vocab, const EvalArgs& args,
                    int topk) {
  auto k_map = [](const std::map<int, double>& m) {
    json obj;
    for (const auto& [k, v] : m) obj[std::to_string(k)] = v;
    return obj;
  };
  json doc;
  doc["R"] = k_map(rep.recall);
  doc["mR"] = k_map(rep.mean_recall);
  doc["tR"] = k_map(rep.temporal_recall);
  json per_pred;
  for (const auto& [rel, stats] : rep.per_predicate) {
    json entry;
    entry["gt"] = stats.gt_count;
    json recall;
    json matched;
    for (const auto& [k, v] : stats.recall) recall[std::to_string(k)] = v;
    for (const auto& [k, v] : stats.matched) matched[std::to_string(k)] = v;
    entry["matched"] = std::move(matched);
    entry["recall"] = std::move(recall);
    per_pred[vocab.relation_classes[static_cast<std::size_t>(rel)].name] = std::move(entry);
  }
  doc["per_predicate"] = std::move(per_pred);
  json counts;
  counts["videos"] = rep.counts.videos;
  counts["frames"] = rep.counts.frames;
  counts["frames_with_gt"] = rep.counts.frames_with_gt;
  counts["gt_instances"] = rep.counts.gt_instances;
  counts["gt_tracklets"] = rep.counts.gt_tracklets;
  counts["pred_tracklets"] = rep.counts.pred_tracklets;
  json fm, tm;
  for (const auto& [k, v] : rep.counts.frame_matched) fm[std::to_string(k)] = v;
  for (const auto& [k, v] : rep.counts.tracklet_matched) tm[std::to_string(k)] = v;
  counts["frame_matched"] = std::move(fm);
  counts["tracklet_matched"] = std::move(tm);
  doc["counts"] = std::move(counts);
  json config;
  config["k"] = rep.config.k_values;
  config["spatial_iou"] = rep.config.spatial_iou_threshold;
  config["temporal_iou"] = rep.config.temporal_iou_threshold;
  config["frame_averaging"] =
      rep.config.frame_averaging == MetricsConfig::FrameAveraging::kPerFrame ? "per-frame"
                                                                             : "micro";
  config["tracklet_averaging"] =
      rep.config.tracklet_averaging == MetricsConfig::TrackletAveraging::kPerVideo ? "per-video"
                                                                                   : "micro";
  config["topk"] = topk;
  config["gap"] = args.gap;
  config["subsample"] = args.subsample;
  doc["config"] = std::move(config);
  return doc;
}

int cmd_eval(EvalArgs args) {
  const RelationVocab vocab = read_vocab(args.vocab_path);
  args.metrics.k_values = parse_k_list(args.k_list);
  std::sort(args.metrics.k_values.begin(), args.metrics.k_values.end());
  if (args.subsample < 1) throw ValidationError("--subsample must be >= 1");
  const int topk = args.topk > 0 ? args.topk : args.metrics.k_values.back();

  std::map<std::string, std::vector<Tracklet>> provided_tracklets;
  const bool use_provided = !args.tracklets_path.empty();
  if (use_provided) {
    if (args.subsample > 1) {
      throw ValidationError("--subsample requires assembling tracklets from --pred; "
                            "drop --tracklets");
    }
    for (auto& t : read_tracklets(args.tracklets_path)) {
      provided_tracklets[t.video_id].push_back(std::move(t));
    }
  }

  Evaluator evaluator(args.metrics, vocab);
  ZipReader zip(args.gt_path, args.pred_path, &vocab, args.subsample);
  VideoBatcher batcher(zip);
  auto stats_by_video = process_videos<Evaluator::VideoStats>(
      [&]() { return batcher.next(); },
      [&](VideoBatch batch) {
        std::vector<Tracklet> assembled;
        const std::vector<Tracklet>* tracks = &assembled;
        if (use_provided) {
          const auto it = provided_tracklets.find(batch.video_id);
          static const std::vector<Tracklet> kEmpty;
          tracks = it == provided_tracklets.end() ? &kEmpty : &it->second;
        } else {
          assembled = assemble(batch.preds, vocab, topk, args.gap);
        }
        return evaluator.evaluate_video(batch.gt, batch.preds, *tracks);
      },
      args.threads);

  for (const auto& [video, stats] : stats_by_video) evaluator.merge(stats);
  const MetricsReport report = evaluator.report();

  AtomicFile out(args.out_path);
  out.stream() << report_to_json(report, vocab, args, topk).dump(2) << '\n';
  out.commit();

  std::ostringstream summary;
  summary << "eval:";
  for (const int k : args.metrics.k_values) {
    summary << " R@" << k << "=" << report.recall.at(k);
  }
  for (const int k : args.metrics.k_values) {
    summary << " mR@" << k << "=" << report.mean_recall.at(k);
  }
  for (const int k : args.metrics.k_values) {
    summary << " tR@" << k << "=" << report.temporal_recall.at(k);
  }
  summary << " (videos=" << report.counts.videos << " frames=" << report.counts.frames
          << " gt_tracklets=" << report.counts.gt_tracklets << ")";
  std::cout << summary.str() << " -> " << args.out_path << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// losses

struct LossesArgs {
  std::string pairs_path, weights_path, out_path;
};

int cmd_losses(const LossesArgs& args) {
  LossWeights weights;
  FocalParams focal;
  double momentum = 0.9;
  bool flip_cs = false;
  int feature_classes = 0;
  if (!args.weights_path.empty()) {
    json w = load_json_file(args.weights_path);
    if (!w.is_object()) throw ValidationError(args.weights_path + ": expected a JSON object");
    auto get = [&](const char* key, double fallback) {
      const auto it = w.find(key);
      return it == w.end() ? fallback : it->get<double>();
    };
    weights.lambda_g = get("lambda_g", weights.lambda_g);
    weights.lambda_l = get("lambda_l", weights.lambda_l);
    weights.lambda_o = get("lambda_o", weights.lambda_o);
    weights.lambda_r = get("lambda_r", weights.lambda_r);
    weights.lambda_cs = get("lambda_cs", weights.lambda_cs);
    focal.alpha = get("focal_alpha", focal.alpha);
    focal.gamma = get("focal_gamma", focal.gamma);
    momentum = get("momentum", momentum);
    if (auto it = w.find("flip_cs_sign"); it != w.end()) flip_cs = it->get<bool>();
    if (auto it = w.find("feature_classes"); it != w.end()) feature_classes = it->get<int>();
  }

  json doc = load_json_file(args.pairs_path);
  if (!doc.is_object()) throw ValidationError(args.pairs_path + ": expected a JSON object");
  if (auto it = doc.find("feature_classes"); it != doc.end() && feature_classes == 0) {
    feature_classes = it->get<int>();
  }

  std::vector<LossPair> pairs;
  if (auto it = doc.find("pairs"); it != doc.end()) {
    if (!it->is_array()) throw ValidationError("pairs must be an array");
    for (const auto& jp : *it) {
      LossPair pair;
      const json& pred = jp.at("pred");
      pair.subject_probs = doubles_from_json(pred.at("sub_probs"), "pred.sub_probs");
      pair.object_probs = doubles_from_json(pred.at("obj_probs"), "pred.obj_probs");
      pair.relation_scores = doubles_from_json(pred.at("rel_scores"), "pred.rel_scores");
      pair.pred_subject_box = box_from_json(pred.at("sub_box"), "pred.sub_box");
      pair.pred_object_box = box_from_json(pred.at("obj_box"), "pred.obj_box");
      if (auto ub = pred.find("union_box"); ub != pred.end() && !ub->is_null()) {
        pair.pred_union_box = box_from_json(*ub, "pred.union_box");
      }
      const json& gt = jp.at("gt");
      pair.gt_subject_cls = gt.at("sub_cls").get<int>();
      if (auto oc = gt.find("obj_cls"); oc != gt.end() && !oc->is_null()) {
        pair.gt_object_cls = oc->get<int>();
      }
      pair.gt_relation = gt.at("rel").get<int>();
      pair.gt_subject_box = box_from_json(gt.at("sub_box"), "gt.sub_box");
      if (auto ob = gt.find("obj_box"); ob != gt.end() && !ob->is_null()) {
        pair.gt_object_box = box_from_json(*ob, "gt.obj_box");
      }
      if (auto f = jp.find("feature"); f != jp.end() && !f->is_null()) {
        pair.feature = doubles_from_json(f->at("values"), "feature.values");
        pair.feature_class = f->at("cls").get<int>();
        feature_classes = std::max(feature_classes, pair.feature_class + 1);
      }
      pairs.push_back(std::move(pair));
    }
  }
  std::vector<BackgroundPred> background;
  if (auto it = doc.find("background"); it != doc.end()) {
    if (!it->is_array()) throw ValidationError("background must be an array");
    for (const auto& jb : *it) {
      BackgroundPred bg;
      bg.subject_probs = doubles_from_json(jb.at("sub_probs"), "background.sub_probs");
      bg.object_probs = doubles_from_json(jb.at("obj_probs"), "background.obj_probs");
      background.push_back(std::move(bg));
    }
  }

  RunningClassMeans means(std::max(feature_classes, 1), momentum);
  LossDiagnostics diag;
  const LossBreakdown breakdown =
      total_loss(pairs, background, weights, focal, means, flip_cs, &diag);

  json out_doc;
  out_doc["giou"] = breakdown.giou;
  out_doc["l1"] = breakdown.l1;
  out_doc["obj"] = breakdown.obj;
  out_doc["rel"] = breakdown.rel;
  out_doc["cs"] = breakdown.cs;
  out_doc["total"] = breakdown.total;
  json counts;
  counts["pairs"] = pairs.size();
  counts["background"] = background.size();
  counts["cs_pairs"] = diag.cs_pairs;
  counts["cs_skipped"] = diag.cs_skipped;
  counts["clamped_scores"] = diag.clamped_scores;
  out_doc["counts"] = std::move(counts);

  AtomicFile out(args.out_path);
  out.stream() << out_doc.dump(2) << '\n';
  out.commit();
  std::cout << "losses: total=" << breakdown.total << " giou=" << breakdown.giou
            << " l1=" << breakdown.l1 << " obj=" << breakdown.obj << " rel=" << breakdown.rel
            << " cs=" << breakdown.cs << " -> " << args.out_path << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// argument wiring

// Flags from a JSON config file become synthetic arguments inserted right
// after the subcommand, so explicit flags (parsed later, take-last) win.
std::vector<std::string> expand_config(std::vector<std::string> args) {
  std::string config_path;
  std::size_t sub_pos = std::string::npos;
  for (std::size_t i = 0; i < args.size(); ++i) {
    const std::string& a = args[i];
    if (sub_pos == std::string::npos && !a.empty() && a[0] != '-') {
      sub_pos = i;
      continue;
    }
    if (a == "--config" && i + 1 < args.size()) {
      config_path = args[i + 1];
    } else if (a.rfind("--config=", 0) == 0) {
      config_path = a.substr(9);
    }
  }
  if (config_path.empty()) return args;
  if (sub_pos == std::string::npos) {
    throw ValidationError("--config requires a subcommand");
  }
  json doc = load_json_file(config_path);
  if (!doc.is_object()) throw ValidationError(config_path + ": config must be a JSON object");
  std::vector<std::string> injected;
  for (const auto& [key, value] : doc.items()) {
    if (key == "config") continue;
    if (value.is_boolean()) {
      if (value.get<bool>()) injected.push_back("--" + key);
    } else if (value.is_array()) {
      std::string joined;
      for (const auto& e : value) {
        if (!joined.empty()) joined += ',';
        joined += e.is_string() ? e.get<std::string>() : e.dump();
      }
      injected.push_back("--" + key + "=" + joined);
    } else if (value.is_string()) {
      injected.push_back("--" + key + "=" + value.get<std::string>());
    } else {
      injected.push_back("--" + key + "=" + value.dump());
    }
  }
  args.insert(args.begin() + static_cast<std::ptrdiff_t>(sub_pos) + 1, injected.begin(),
              injected.end());
  return args;
}

void take_last_everywhere(CLI::App& app) {
  for (CLI::Option* opt : app.get_options([](CLI::Option*) { return true; })) {
    opt->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  }
  for (CLI::App* sub : app.get_subcommands([](const CLI::App*) { return true; })) {
    take_last_everywhere(*sub);
  }
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"temporally consistent scene-graph toolkit"};
  app.require_subcommand(1);

  SynthArgs synth_args;
  CLI::App* synth_cmd = app.add_subcommand("synth", "generate a synthetic dataset");
  synth_cmd->add_option("--seed", synth_args.seed, "base RNG seed");
  synth_cmd->add_option("--frames", synth_args.frames, "frames per video");
  synth_cmd->add_option("--agents", synth_args.agents, "moving agents per video");
  synth_cmd->add_option("--script", synth_args.script_path, "activity script JSON");
  synth_cmd->add_option("--auto", synth_args.auto_entries, "generate this many script entries");
  synth_cmd->add_option("--relations", synth_args.relations, "relation classes for --auto");
  synth_cmd->add_option("--jitter", synth_args.jitter, "box corner noise sigma");
  synth_cmd->add_option("--flip", synth_args.flip, "relation flip probability");
  synth_cmd->add_option("--drop", synth_args.drop, "prediction dropout probability");
  synth_cmd->add_option("--nq", synth_args.nq, "query slots per frame");
  synth_cmd->add_flag("--emit-background", synth_args.emit_background,
                      "pad every frame to nq predictions with background slots");
  synth_cmd->add_option("--videos", synth_args.videos, "number of videos (seeds seed..seed+n-1)");
  synth_cmd->add_option("--gt", synth_args.gt_out, "ground-truth jsonl output")->required();
  synth_cmd->add_option("--pred", synth_args.pred_out, "prediction jsonl output")->required();
  synth_cmd->add_option("--truth", synth_args.truth_out, "true tracklets json output");
  synth_cmd->add_option("--vocab", synth_args.vocab_out, "vocabulary json output");

  std::string pl_gt, pl_out;
  double pl_iou = 0.5;
  CLI::App* pl_cmd = app.add_subcommand("pseudo-label", "assign persistent instance ids");
  pl_cmd->add_option("--gt", pl_gt, "ground-truth jsonl input")->required();
  pl_cmd->add_option("--iou", pl_iou, "IoU threshold for id inheritance");
  pl_cmd->add_option("--out", pl_out, "labeled jsonl output")->required();

  MatchArgs match_args;
  CLI::App* match_cmd = app.add_subcommand("match", "temporally consistent bipartite matching");
  match_cmd->add_option("--gt", match_args.gt_path, "ground-truth jsonl")->required();
  match_cmd->add_option("--pred", match_args.pred_path, "prediction jsonl")->required();
  match_cmd->add_option("--out", match_args.out_path, "assignment jsonl output")->required();
  match_cmd->add_option("--vocab", match_args.vocab_path, "vocabulary json (enables validation)");
  match_cmd->add_option("--penalty", match_args.penalty, "registry row penalty");
  match_cmd->add_option("--w-o", match_args.weights.w_o, "object class weight");
  match_cmd->add_option("--w-s", match_args.weights.w_s, "subject class weight");
  match_cmd->add_option("--w-r", match_args.weights.w_r, "relation class weight");
  match_cmd->add_option("--w-ob", match_args.weights.w_ob, "object box weight");
  match_cmd->add_option("--w-sub", match_args.weights.w_sub, "subject box weight");
  match_cmd->add_option("--w-ub", match_args.weights.w_ub, "union box weight");
  match_cmd->add_option("--box-l1", match_args.weights.box_l1_weight, "box L1 weight");
  match_cmd->add_option("--box-giou", match_args.weights.box_giou_weight, "box giou weight");
  match_cmd->add_option("--threads", match_args.threads, "videos processed in parallel")
      ->envname("TCDSG_THREADS");

  AssembleArgs assemble_args;
  CLI::App* assemble_cmd = app.add_subcommand("assemble", "build tracklets from predictions");
  assemble_cmd->add_option("--pred", assemble_args.pred_path, "prediction jsonl")->required();
  assemble_cmd->add_option("--vocab", assemble_args.vocab_path, "vocabulary json")->required();
  assemble_cmd->add_option("--topk", assemble_args.topk, "predictions kept per frame");
  assemble_cmd->add_option("--gap", assemble_args.gap, "tolerated absence in frames");
  assemble_cmd->add_option("--out", assemble_args.out_path, "tracklets json output")->required();
  assemble_cmd->add_option("--threads", assemble_args.threads, "videos processed in parallel")
      ->envname("TCDSG_THREADS");

  EvalArgs eval_args;
  CLI::App* eval_cmd = app.add_subcommand("eval", "frame and tracklet recall metrics");
  eval_cmd->add_option("--gt", eval_args.gt_path, "ground-truth jsonl")->required();
  eval_cmd->add_option("--pred", eval_args.pred_path, "prediction jsonl")->required();
  eval_cmd->add_option("--tracklets", eval_args.tracklets_path,
                       "predicted tracklets json (otherwise assembled from --pred)");
  eval_cmd->add_option("--vocab", eval_args.vocab_path, "vocabulary json")->required();
  eval_cmd->add_option("--k", eval_args.k_list, "comma-separated K values");
  eval_cmd->add_option("--spatial-iou", eval_args.metrics.spatial_iou_threshold,
                       "box IoU threshold");
  eval_cmd->add_option("--temporal-iou", eval_args.metrics.temporal_iou_threshold,
                       "temporal IoU threshold");
  std::string frame_avg = "per-frame", tracklet_avg = "per-video";
  eval_cmd->add_option("--frame-averaging", frame_avg, "per-frame | micro")
      ->check(CLI::IsMember({"per-frame", "micro"}));
  eval_cmd->add_option("--tracklet-averaging", tracklet_avg, "per-video | micro")
      ->check(CLI::IsMember({"per-video", "micro"}));
  eval_cmd->add_option("--topk", eval_args.topk, "assembly top-k (default: largest K)");
  eval_cmd->add_option("--gap", eval_args.gap, "assembly gap tolerance");
  eval_cmd->add_option("--subsample", eval_args.subsample, "keep every n-th frame");
  eval_cmd->add_option("--out", eval_args.out_path, "report json output")->required();
  eval_cmd->add_option("--threads", eval_args.threads, "videos processed in parallel")
      ->envname("TCDSG_THREADS");

  LossesArgs losses_args;
  CLI::App* losses_cmd = app.add_subcommand("losses", "reference loss breakdown");
  losses_cmd->add_option("--pairs", losses_args.pairs_path, "matched pairs json")->required();
  losses_cmd->add_option("--weights", losses_args.weights_path, "loss weights json");
  losses_cmd->add_option("--out", losses_args.out_path, "breakdown json output")->required();

  std::string config_path;
  for (CLI::App* sub : {synth_cmd, pl_cmd, match_cmd, assemble_cmd, eval_cmd, losses_cmd}) {
    sub->add_option("--config", config_path, "JSON config file; explicit flags override it");
  }
  take_last_everywhere(app);

  try {
    std::vector<std::string> args =
        expand_config(std::vector<std::string>(argv + 1, argv + argc));
    std::reverse(args.begin(), args.end());  // CLI11 consumes from the back
    app.parse(std::move(args));
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (synth_cmd->parsed()) return cmd_synth(synth_args);
    if (pl_cmd->parsed()) return cmd_pseudo_label(pl_gt, pl_iou, pl_out);
    if (match_cmd->parsed()) return cmd_match(match_args);
    if (assemble_cmd->parsed()) return cmd_assemble(assemble_args);
    if (eval_cmd->parsed()) {
      eval_args.metrics.frame_averaging = frame_avg == "micro"
                                              ? MetricsConfig::FrameAveraging::kMicro
                                              : MetricsConfig::FrameAveraging::kPerFrame;
      eval_args.metrics.tracklet_averaging = tracklet_avg == "micro"
                                                 ? MetricsConfig::TrackletAveraging::kMicro
                                                 : MetricsConfig::TrackletAveraging::kPerVideo;
      return cmd_eval(eval_args);
    }
    if (losses_cmd->parsed()) return cmd_losses(losses_args);
    std::cerr << "error: no subcommand\n";
    return 1;
  } catch (const InfeasibleError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace tcdsg::cli
