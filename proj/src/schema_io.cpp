#include "tcdsg/schema_io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "tcdsg/errors.hpp"

namespace tcdsg {

using json = nlohmann::ordered_json;

namespace {

constexpr double kSimplexTolerance = 1e-6;

struct LineCtx {
  const std::string& path;
  std::size_t line_no;

  [[noreturn]] void fail(const std::string& msg) const {
    throw ValidationError(path + ":" + std::to_string(line_no) + ": " + msg);
  }
};

const json& require(const json& obj, const char* key, const LineCtx& ctx) {
  auto it = obj.find(key);
  if (it == obj.end()) ctx.fail(std::string("missing field '") + key + "'");
  return *it;
}

std::string require_string(const json& obj, const char* key, const LineCtx& ctx) {
  const json& v = require(obj, key, ctx);
  if (!v.is_string()) ctx.fail(std::string("field '") + key + "' must be a string");
  return v.get<std::string>();
}

int require_int(const json& obj, const char* key, const LineCtx& ctx) {
  const json& v = require(obj, key, ctx);
  if (!v.is_number_integer()) ctx.fail(std::string("field '") + key + "' must be an integer");
  return v.get<int>();
}

double require_number(const json& obj, const char* key, const LineCtx& ctx) {
  const json& v = require(obj, key, ctx);
  if (!v.is_number()) ctx.fail(std::string("field '") + key + "' must be a number");
  return v.get<double>();
}

// Raw xyxy quadruple, bounds-checked against [0,xmax]x[0,ymax].
Box parse_box(const json& v, double xmax, double ymax, const char* what, const LineCtx& ctx) {
  if (!v.is_array() || v.size() != 4 || !v[0].is_number() || !v[1].is_number() ||
      !v[2].is_number() || !v[3].is_number()) {
    ctx.fail(std::string(what) + " must be an array of 4 numbers");
  }
  Box b{v[0].get<double>(), v[1].get<double>(), v[2].get<double>(), v[3].get<double>()};
  if (!(b.x1 <= b.x2) || !(b.y1 <= b.y2)) ctx.fail(std::string(what) + " violates x1<=x2, y1<=y2");
  if (b.x1 < 0.0 || b.y1 < 0.0 || b.x2 > xmax || b.y2 > ymax) {
    ctx.fail(std::string(what) + " out of bounds [0," + std::to_string(xmax) + "]x[0," +
             std::to_string(ymax) + "]");
  }
  return b;
}

std::vector<double> parse_probs(const json& v, const char* what, int expected_size,
                                const LineCtx& ctx) {
  if (!v.is_array() || v.empty()) ctx.fail(std::string(what) + " must be a nonempty array");
  if (expected_size > 0 && static_cast<int>(v.size()) != expected_size) {
    ctx.fail(std::string(what) + " has " + std::to_string(v.size()) + " entries, expected " +
             std::to_string(expected_size));
  }
  std::vector<double> probs;
  probs.reserve(v.size());
  double sum = 0.0;
  for (const auto& e : v) {
    if (!e.is_number()) ctx.fail(std::string(what) + " entries must be numbers");
    const double p = e.get<double>();
    if (p < 0.0) ctx.fail(std::string(what) + " has a negative entry");
    sum += p;
    probs.push_back(p);
  }
  if (std::abs(sum - 1.0) > kSimplexTolerance) {
    ctx.fail(std::string(what) + " sums to " + std::to_string(sum) + ", expected 1");
  }
  return probs;
}

json box_to_json(const Box& b, double sx, double sy) {
  return json::array({b.x1 * sx, b.y1 * sy, b.x2 * sx, b.y2 * sy});
}

// Shared stream-order bookkeeping: grouped by video, frames strictly
// increasing within a video.
class StreamOrder {
 public:
  void check(const std::string& video_id, int frame_idx, const LineCtx& ctx) {
    if (video_id == current_) {
      if (frame_idx == last_frame_) {
        ctx.fail("duplicate frame " + std::to_string(frame_idx) + " for video '" + video_id + "'");
      }
      if (frame_idx < last_frame_) {
        ctx.fail("frame " + std::to_string(frame_idx) + " out of order for video '" + video_id +
                 "' (previous " + std::to_string(last_frame_) + ")");
      }
    } else {
      if (closed_.count(video_id) != 0) {
        ctx.fail("file not grouped by video: video '" + video_id + "' reappears");
      }
      if (!current_.empty() || started_) closed_.insert(current_);
      current_ = video_id;
      started_ = true;
    }
    last_frame_ = frame_idx;
  }

 private:
  std::string current_;
  int last_frame_ = -1;
  bool started_ = false;
  std::unordered_set<std::string> closed_;
};

// Line-by-line JSONL pump shared by both readers.
class JsonlFile {
 public:
  explicit JsonlFile(const std::string& path) : path_(path), in_(path) {
    if (!in_) throw IoError("cannot open " + path);
  }

  // nullopt at EOF. Skips blank lines.
  std::optional<std::pair<json, LineCtx>> next_line() {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_no_;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      LineCtx ctx{path_, line_no_};
      json parsed = json::parse(line, nullptr, false);
      if (parsed.is_discarded()) ctx.fail("invalid JSON");
      if (!parsed.is_object()) ctx.fail("each line must be a JSON object");
      return std::make_pair(std::move(parsed), ctx);
    }
    if (in_.bad()) throw IoError("read failure on " + path_);
    return std::nullopt;
  }

 private:
  std::string path_;
  std::ifstream in_;
  std::size_t line_no_ = 0;
};

GtEntity parse_entity(const json& v, double width, double height, const char* what,
                      const LineCtx& ctx) {
  if (!v.is_object()) ctx.fail(std::string(what) + " must be an object");
  GtEntity e;
  if (auto it = v.find("id"); it != v.end() && !it->is_null()) {
    if (!it->is_number_integer()) ctx.fail(std::string(what) + ".id must be an integer");
    e.id = it->get<std::int64_t>();
  }
  e.cls = require_int(v, "cls", ctx);
  if (e.cls < 0) ctx.fail(std::string(what) + ".cls must be nonnegative");
  const Box pixel = parse_box(require(v, "box", ctx), width, height, what, ctx);
  e.box = Box{pixel.x1 / width, pixel.y1 / height, pixel.x2 / width, pixel.y2 / height};
  return e;
}

}  // namespace

void validate(const RelationVocab& vocab) {
  auto check_unique = [](const std::vector<std::string>& names, const char* what) {
    std::unordered_set<std::string> seen;
    for (const auto& n : names) {
      if (n.empty()) throw ValidationError(std::string(what) + ": empty class name");
      if (!seen.insert(n).second) {
        throw ValidationError(std::string(what) + ": duplicate class name '" + n + "'");
      }
    }
  };
  check_unique(vocab.object_classes, "object_classes");
  check_unique(vocab.subject_classes, "subject_classes");
  std::vector<std::string> rel_names;
  rel_names.reserve(vocab.relation_classes.size());
  for (const auto& r : vocab.relation_classes) rel_names.push_back(r.name);
  check_unique(rel_names, "relation_classes");
  if (vocab.subject_classes.empty() || vocab.object_classes.empty() ||
      vocab.relation_classes.empty()) {
    throw ValidationError("vocabulary must declare at least one class per list");
  }
}

// ---------------------------------------------------------------------------
// GtReader

struct GtReader::Impl {
  JsonlFile file;
  StreamOrder order;
  const RelationVocab* vocab;

  Impl(const std::string& path, const RelationVocab* v) : file(path), vocab(v) {}
};

GtReader::GtReader(const std::string& path, const RelationVocab* vocab)
    : impl_(std::make_unique<Impl>(path, vocab)) {}
GtReader::~GtReader() = default;
GtReader::GtReader(GtReader&&) noexcept = default;
GtReader& GtReader::operator=(GtReader&&) noexcept = default;

std::optional<FrameGroundTruth> GtReader::next() {
  auto entry = impl_->file.next_line();
  if (!entry) return std::nullopt;
  const auto& [obj, ctx] = *entry;

  FrameGroundTruth frame;
  frame.video_id = require_string(obj, "video_id", ctx);
  if (frame.video_id.empty()) ctx.fail("video_id must be nonempty");
  frame.frame_idx = require_int(obj, "frame_idx", ctx);
  if (frame.frame_idx < 0) ctx.fail("frame_idx must be nonnegative");
  frame.width = require_number(obj, "width", ctx);
  frame.height = require_number(obj, "height", ctx);
  if (frame.width <= 0.0 || frame.height <= 0.0) ctx.fail("width/height must be positive");
  impl_->order.check(frame.video_id, frame.frame_idx, ctx);

  const json& triplets = require(obj, "triplets", ctx);
  if (!triplets.is_array()) ctx.fail("triplets must be an array");
  for (const auto& t : triplets) {
    if (!t.is_object()) ctx.fail("triplet entries must be objects");
    GtTriplet trip;
    trip.subject = parse_entity(require(t, "sub", ctx), frame.width, frame.height, "sub", ctx);
    if (auto it = t.find("obj"); it != t.end() && !it->is_null()) {
      trip.object = parse_entity(*it, frame.width, frame.height, "obj", ctx);
    }
    trip.relation = require_int(t, "rel", ctx);
    if (trip.relation < 0) ctx.fail("rel must be nonnegative");
    if (const RelationVocab* v = impl_->vocab) {
      if (trip.subject.cls >= v->num_subject_classes()) ctx.fail("sub.cls out of vocabulary range");
      if (trip.relation >= v->num_relation_classes()) ctx.fail("rel out of vocabulary range");
      if (trip.object && trip.object->cls >= v->num_object_classes()) {
        ctx.fail("obj.cls out of vocabulary range");
      }
      if (v->objectless(trip.relation) && trip.object) {
        ctx.fail("relation '" + v->relation_classes[trip.relation].name +
                 "' is objectless but triplet carries an object");
      }
      if (!v->objectless(trip.relation) && !trip.object) {
        ctx.fail("relation '" + v->relation_classes[trip.relation].name +
                 "' requires an object but triplet has none");
      }
    }
    frame.triplets.push_back(std::move(trip));
  }
  return frame;
}

// ---------------------------------------------------------------------------
// PredReader

struct PredReader::Impl {
  JsonlFile file;
  StreamOrder order;
  const RelationVocab* vocab;

  Impl(const std::string& path, const RelationVocab* v) : file(path), vocab(v) {}
};

PredReader::PredReader(const std::string& path, const RelationVocab* vocab)
    : impl_(std::make_unique<Impl>(path, vocab)) {}
PredReader::~PredReader() = default;
PredReader::PredReader(PredReader&&) noexcept = default;
PredReader& PredReader::operator=(PredReader&&) noexcept = default;

std::optional<FramePrediction> PredReader::next() {
  auto entry = impl_->file.next_line();
  if (!entry) return std::nullopt;
  const auto& [obj, ctx] = *entry;

  FramePrediction frame;
  frame.video_id = require_string(obj, "video_id", ctx);
  if (frame.video_id.empty()) ctx.fail("video_id must be nonempty");
  frame.frame_idx = require_int(obj, "frame_idx", ctx);
  if (frame.frame_idx < 0) ctx.fail("frame_idx must be nonnegative");
  impl_->order.check(frame.video_id, frame.frame_idx, ctx);

  const json& preds = require(obj, "preds", ctx);
  if (!preds.is_array()) ctx.fail("preds must be an array");
  std::unordered_set<int> seen_queries;
  const RelationVocab* v = impl_->vocab;
  for (const auto& p : preds) {
    if (!p.is_object()) ctx.fail("pred entries must be objects");
    QueryPrediction qp;
    qp.query = require_int(p, "q", ctx);
    if (qp.query < 0) ctx.fail("q must be nonnegative");
    if (!seen_queries.insert(qp.query).second) {
      ctx.fail("duplicate query index " + std::to_string(qp.query));
    }
    qp.subject_probs = parse_probs(require(p, "sub_probs", ctx), "sub_probs",
                                   v ? v->num_subject_classes() + 1 : 0, ctx);
    qp.object_probs = parse_probs(require(p, "obj_probs", ctx), "obj_probs",
                                  v ? v->num_object_classes() + 1 : 0, ctx);
    qp.relation_probs = parse_probs(require(p, "rel_probs", ctx), "rel_probs",
                                    v ? v->num_relation_classes() : 0, ctx);
    qp.subject_box = parse_box(require(p, "sub_box", ctx), 1.0, 1.0, "sub_box", ctx);
    qp.object_box = parse_box(require(p, "obj_box", ctx), 1.0, 1.0, "obj_box", ctx);
    if (auto it = p.find("union_box"); it != p.end() && !it->is_null()) {
      qp.union_box = parse_box(*it, 1.0, 1.0, "union_box", ctx);
    }
    frame.predictions.push_back(std::move(qp));
  }
  return frame;
}

// ---------------------------------------------------------------------------
// Whole-file conveniences

std::vector<FrameGroundTruth> read_gt_stream(const std::string& path, const RelationVocab* vocab) {
  GtReader reader(path, vocab);
  std::vector<FrameGroundTruth> frames;
  while (auto f = reader.next()) frames.push_back(std::move(*f));
  return frames;
}

std::vector<FramePrediction> read_pred_stream(const std::string& path,
                                              const RelationVocab* vocab) {
  PredReader reader(path, vocab);
  std::vector<FramePrediction> frames;
  while (auto f = reader.next()) frames.push_back(std::move(*f));
  return frames;
}

// ---------------------------------------------------------------------------
// Serialization

std::string to_jsonl_line(const FrameGroundTruth& frame) {
  json line;
  line["video_id"] = frame.video_id;
  line["frame_idx"] = frame.frame_idx;
  line["width"] = frame.width;
  line["height"] = frame.height;
  json triplets = json::array();
  for (const auto& t : frame.triplets) {
    json jt;
    json sub;
    if (t.subject.id) sub["id"] = *t.subject.id;
    sub["cls"] = t.subject.cls;
    sub["box"] = box_to_json(t.subject.box, frame.width, frame.height);
    jt["sub"] = std::move(sub);
    if (t.object) {
      json o;
      if (t.object->id) o["id"] = *t.object->id;
      o["cls"] = t.object->cls;
      o["box"] = box_to_json(t.object->box, frame.width, frame.height);
      jt["obj"] = std::move(o);
    } else {
      jt["obj"] = nullptr;
    }
    jt["rel"] = t.relation;
    triplets.push_back(std::move(jt));
  }
  line["triplets"] = std::move(triplets);
  return line.dump();
}

std::string to_jsonl_line(const FramePrediction& frame) {
  json line;
  line["video_id"] = frame.video_id;
  line["frame_idx"] = frame.frame_idx;
  json preds = json::array();
  for (const auto& p : frame.predictions) {
    json jp;
    jp["q"] = p.query;
    jp["sub_probs"] = p.subject_probs;
    jp["obj_probs"] = p.object_probs;
    jp["rel_probs"] = p.relation_probs;
    jp["sub_box"] = box_to_json(p.subject_box, 1.0, 1.0);
    jp["obj_box"] = box_to_json(p.object_box, 1.0, 1.0);
    if (p.union_box) jp["union_box"] = box_to_json(*p.union_box, 1.0, 1.0);
    preds.push_back(std::move(jp));
  }
  line["preds"] = std::move(preds);
  return line.dump();
}

void write_gt_stream(std::ostream& out, std::span<const FrameGroundTruth> frames) {
  for (const auto& f : frames) out << to_jsonl_line(f) << '\n';
}

void write_pred_stream(std::ostream& out, std::span<const FramePrediction> frames) {
  for (const auto& f : frames) out << to_jsonl_line(f) << '\n';
}

// ---------------------------------------------------------------------------
// Tracklets

namespace {

json tracklet_to_json(const Tracklet& t) {
  json jt;
  jt["video_id"] = t.video_id;
  jt["query"] = t.query;
  json trip;
  trip["sub_cls"] = t.triplet.subject_cls;
  if (t.triplet.object_cls) {
    trip["obj_cls"] = *t.triplet.object_cls;
  } else {
    trip["obj_cls"] = nullptr;
  }
  trip["rel"] = t.triplet.relation;
  jt["triplet"] = std::move(trip);
  jt["t_start"] = t.interval.start;
  jt["t_end"] = t.interval.end;
  jt["score"] = t.score;
  json sb = json::array();
  for (const auto& b : t.subject_boxes) sb.push_back(box_to_json(b, 1.0, 1.0));
  jt["sub_boxes"] = std::move(sb);
  if (t.triplet.object_cls) {
    json ob = json::array();
    for (const auto& b : t.object_boxes) ob.push_back(box_to_json(b, 1.0, 1.0));
    jt["obj_boxes"] = std::move(ob);
  } else {
    jt["obj_boxes"] = nullptr;
  }
  return jt;
}

}  // namespace

std::vector<Tracklet> read_tracklets(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded() || !doc.is_array()) {
    throw ValidationError(path + ": expected a JSON array of tracklets");
  }
  LineCtx ctx{path, 0};
  std::vector<Tracklet> out;
  out.reserve(doc.size());
  for (const auto& jt : doc) {
    if (!jt.is_object()) ctx.fail("tracklet entries must be objects");
    Tracklet t;
    t.video_id = require_string(jt, "video_id", ctx);
    t.query = require_int(jt, "query", ctx);
    const json& trip = require(jt, "triplet", ctx);
    t.triplet.subject_cls = require_int(trip, "sub_cls", ctx);
    if (auto it = trip.find("obj_cls"); it != trip.end() && !it->is_null()) {
      t.triplet.object_cls = it->get<int>();
    }
    t.triplet.relation = require_int(trip, "rel", ctx);
    t.interval.start = require_int(jt, "t_start", ctx);
    t.interval.end = require_int(jt, "t_end", ctx);
    if (!t.interval.valid()) ctx.fail("tracklet interval has t_start > t_end");
    t.score = require_number(jt, "score", ctx);
    const json& sb = require(jt, "sub_boxes", ctx);
    if (!sb.is_array()) ctx.fail("sub_boxes must be an array");
    for (const auto& b : sb) t.subject_boxes.push_back(parse_box(b, 1.0, 1.0, "sub_boxes", ctx));
    if (auto it = jt.find("obj_boxes"); it != jt.end() && !it->is_null()) {
      for (const auto& b : *it) t.object_boxes.push_back(parse_box(b, 1.0, 1.0, "obj_boxes", ctx));
    }
    const auto frames = static_cast<std::size_t>(t.interval.length());
    if (t.subject_boxes.size() != frames) {
      ctx.fail("sub_boxes length does not match tracklet interval");
    }
    if (t.triplet.object_cls && t.object_boxes.size() != frames) {
      ctx.fail("obj_boxes length does not match tracklet interval");
    }
    if (!t.triplet.object_cls && !t.object_boxes.empty()) {
      ctx.fail("objectless tracklet carries object boxes");
    }
    out.push_back(std::move(t));
  }
  return out;
}

void write_tracklets(std::ostream& out, std::span<const Tracklet> tracklets) {
  json arr = json::array();
  for (const auto& t : tracklets) arr.push_back(tracklet_to_json(t));
  out << arr.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Vocabulary

RelationVocab read_vocab(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) {
    throw ValidationError(path + ": expected a JSON object");
  }
  LineCtx ctx{path, 0};
  RelationVocab vocab;
  for (const auto& n : require(doc, "object_classes", ctx)) {
    vocab.object_classes.push_back(n.get<std::string>());
  }
  for (const auto& n : require(doc, "subject_classes", ctx)) {
    vocab.subject_classes.push_back(n.get<std::string>());
  }
  for (const auto& r : require(doc, "relation_classes", ctx)) {
    if (!r.is_object()) ctx.fail("relation_classes entries must be objects");
    RelationClass rc;
    rc.name = require_string(r, "name", ctx);
    if (auto it = r.find("objectless"); it != r.end()) rc.objectless = it->get<bool>();
    vocab.relation_classes.push_back(std::move(rc));
  }
  validate(vocab);
  return vocab;
}

void write_vocab(std::ostream& out, const RelationVocab& vocab) {
  json doc;
  doc["object_classes"] = vocab.object_classes;
  doc["subject_classes"] = vocab.subject_classes;
  json rels = json::array();
  for (const auto& r : vocab.relation_classes) {
    rels.push_back(json{{"name", r.name}, {"objectless", r.objectless}});
  }
  doc["relation_classes"] = std::move(rels);
  out << doc.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Mask extents

Box mask_extent_to_box(std::span<const std::pair<double, double>> points, double width,
                       double height) {
  if (points.empty()) throw ValidationError("mask_extent_to_box: empty point list");
  if (width <= 0.0 || height <= 0.0) {
    throw ValidationError("mask_extent_to_box: frame dimensions must be positive");
  }
  double min_x = std::numeric_limits<double>::infinity();
  double min_y = std::numeric_limits<double>::infinity();
  double max_x = -std::numeric_limits<double>::infinity();
  double max_y = -std::numeric_limits<double>::infinity();
  for (const auto& [x, y] : points) {
    if (x < 0.0 || y < 0.0 || x > width || y > height) {
      throw ValidationError("mask_extent_to_box: point outside frame");
    }
    min_x = std::min(min_x, x);
    min_y = std::min(min_y, y);
    max_x = std::max(max_x, x);
    max_y = std::max(max_y, y);
  }
  return Box{min_x / width, min_y / height, max_x / width, max_y / height};
}

// ---------------------------------------------------------------------------
// AtomicFile

struct AtomicFile::Impl {
  std::string path;
  std::string tmp_path;
  std::ofstream out;
  bool committed = false;

  explicit Impl(const std::string& p) : path(p), tmp_path(p + ".tmp"), out(tmp_path) {
    if (!out) throw IoError("cannot open " + tmp_path + " for writing");
  }
};

AtomicFile::AtomicFile(const std::string& path) : impl_(std::make_unique<Impl>(path)) {}

AtomicFile::~AtomicFile() {
  if (impl_ && !impl_->committed) {
    impl_->out.close();
    std::remove(impl_->tmp_path.c_str());
  }
}

std::ostream& AtomicFile::stream() { return impl_->out; }

void AtomicFile::commit() {
  impl_->out.flush();
  if (!impl_->out) throw IoError("write failure on " + impl_->tmp_path);
  impl_->out.close();
  if (std::rename(impl_->tmp_path.c_str(), impl_->path.c_str()) != 0) {
    throw IoError("cannot rename " + impl_->tmp_path + " to " + impl_->path);
  }
  impl_->committed = true;
}

}  // namespace tcdsg
