#include "tcdsg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "tcdsg/errors.hpp"

namespace tcdsg {

namespace synth_detail {

namespace {

enum Tag : std::uint64_t {
  kAgentSize = 1,
  kAgentPos = 2,
  kAgentVel = 3,
  kJitter = 4,
  kFlip = 5,
  kFlipPick = 6,
  kDrop = 7,
  kScript = 8,
};

std::uint64_t mix(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t hash_key(std::uint64_t seed, std::uint64_t tag, std::uint64_t a, std::uint64_t b) {
  return mix(mix(mix(mix(seed) ^ tag) ^ a) ^ b);
}

// Triangle-wave reflection of p into [lo, hi].
double reflect(double p, double lo, double hi) {
  const double span = hi - lo;
  if (span <= 0.0) return 0.5 * (lo + hi);
  double m = std::fmod(p - lo, 2.0 * span);
  if (m < 0.0) m += 2.0 * span;
  return lo + (m <= span ? m : 2.0 * span - m);
}

}  // namespace

double uniform01(std::uint64_t seed, std::uint64_t tag, std::uint64_t a, std::uint64_t b) {
  return static_cast<double>(hash_key(seed, tag, a, b) >> 11) * 0x1.0p-53;
}

double normal01(std::uint64_t seed, std::uint64_t tag, std::uint64_t a, std::uint64_t b) {
  const double u1 = std::max(uniform01(seed, tag, a, b * 2), 1e-12);
  const double u2 = uniform01(seed, tag, a, b * 2 + 1);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Box agent_box(std::uint64_t seed, int agent, int frame) {
  const auto a = static_cast<std::uint64_t>(agent);
  // Sizes and speeds are bounded so that consecutive frames of the same
  // agent always overlap with IoU well above 0.5.
  const double half_w = 0.04 + 0.06 * uniform01(seed, kAgentSize, a, 0);
  const double half_h = 0.04 + 0.06 * uniform01(seed, kAgentSize, a, 1);
  const double x0 = half_w + (1.0 - 2.0 * half_w) * uniform01(seed, kAgentPos, a, 0);
  const double y0 = half_h + (1.0 - 2.0 * half_h) * uniform01(seed, kAgentPos, a, 1);
  auto speed = [&](std::uint64_t axis) {
    const double mag = 0.002 + 0.006 * uniform01(seed, kAgentVel, a, axis);
    return uniform01(seed, kAgentVel, a, axis + 2) < 0.5 ? -mag : mag;
  };
  const double cx = reflect(x0 + speed(0) * frame, half_w, 1.0 - half_w);
  const double cy = reflect(y0 + speed(1) * frame, half_h, 1.0 - half_h);
  return Box{cx - half_w, cy - half_h, cx + half_w, cy + half_h};
}

}  // namespace synth_detail

namespace {

using synth_detail::kDrop;
using synth_detail::kFlip;
using synth_detail::kFlipPick;
using synth_detail::kJitter;
using synth_detail::kScript;

std::string default_video_id(std::uint64_t seed) {
  std::string digits = std::to_string(seed);
  if (digits.size() < 8) digits.insert(0, 8 - digits.size(), '0');
  return "synth-" + digits;
}

int derive_relation_count(const SynthConfig& config) {
  int count = config.relation_classes;
  for (const auto& e : config.script) count = std::max(count, e.relation + 1);
  return std::max(count, 1);
}

void validate_config(const SynthConfig& config, int relation_count,
                     const std::vector<char>& objectless) {
  if (config.frames < 1) throw ValidationError("synth: frames must be >= 1");
  if (config.agents < 1) throw ValidationError("synth: agents must be >= 1");
  if (config.num_queries < 1) throw ValidationError("synth: num_queries must be >= 1");
  if (config.jitter_sigma < 0.0) throw ValidationError("synth: jitter must be >= 0");
  if (config.flip_prob < 0.0 || config.flip_prob > 1.0 || config.drop_prob < 0.0 ||
      config.drop_prob > 1.0) {
    throw ValidationError("synth: probabilities must lie in [0,1]");
  }
  if (static_cast<int>(config.script.size()) > config.num_queries) {
    throw ValidationError("synth: script has more entries than queries");
  }
  std::vector<char> used_with_object(static_cast<std::size_t>(relation_count), 0);
  for (const auto& e : config.script) {
    if (e.subject_agent < 0 || e.subject_agent >= config.agents ||
        (e.object_agent && (*e.object_agent < 0 || *e.object_agent >= config.agents))) {
      throw ValidationError("synth: script references an agent out of range");
    }
    if (e.relation < 0 || e.relation >= relation_count) {
      throw ValidationError("synth: script relation out of range");
    }
    if (!e.interval.valid() || e.interval.start < 0 || e.interval.end >= config.frames) {
      throw ValidationError("synth: script interval out of range");
    }
    if (e.object_agent) used_with_object[static_cast<std::size_t>(e.relation)] = 1;
  }
  for (int r = 0; r < relation_count; ++r) {
    if (objectless[static_cast<std::size_t>(r)] && used_with_object[static_cast<std::size_t>(r)]) {
      throw ValidationError("synth: relation " + std::to_string(r) +
                            " used both with and without an object");
    }
  }
}

std::string padded_name(const char* prefix, int i) {
  std::string digits = std::to_string(i);
  if (digits.size() < 2) digits.insert(0, 2 - digits.size(), '0');
  return prefix + digits;
}

Box jittered(const Box& b, double sigma, std::uint64_t seed, std::uint64_t frame,
             std::uint64_t slot) {
  if (sigma == 0.0) return b;
  double c[4] = {b.x1, b.y1, b.x2, b.y2};
  for (std::uint64_t i = 0; i < 4; ++i) {
    c[i] += sigma * synth_detail::normal01(seed, kJitter, frame, slot * 4 + i);
  }
  Box out{std::min(c[0], c[2]), std::min(c[1], c[3]), std::max(c[0], c[2]), std::max(c[1], c[3])};
  out.x1 = std::clamp(out.x1, 0.0, 1.0);
  out.y1 = std::clamp(out.y1, 0.0, 1.0);
  out.x2 = std::clamp(out.x2, 0.0, 1.0);
  out.y2 = std::clamp(out.y2, 0.0, 1.0);
  return out;
}

}  // namespace

SynthOutput generate(const SynthConfig& config) {
  const int relation_count = derive_relation_count(config);
  std::vector<char> objectless;
  if (!config.objectless_relations.empty()) {
    if (static_cast<int>(config.objectless_relations.size()) != relation_count) {
      throw ValidationError("synth: objectless flag list does not match the relation count");
    }
    objectless = config.objectless_relations;
    for (const auto& e : config.script) {
      if (!e.object_agent && !objectless[static_cast<std::size_t>(e.relation)]) {
        throw ValidationError("synth: script uses relation " + std::to_string(e.relation) +
                              " without an object but it is not flagged objectless");
      }
    }
  } else {
    objectless.assign(static_cast<std::size_t>(relation_count), 0);
    for (const auto& e : config.script) {
      if (!e.object_agent) objectless[static_cast<std::size_t>(e.relation)] = 1;
    }
  }
  validate_config(config, relation_count, objectless);

  SynthOutput out;
  out.video_id = config.video_id.empty() ? default_video_id(config.seed) : config.video_id;

  for (int a = 0; a < config.agents; ++a) {
    out.vocab.subject_classes.push_back(padded_name("actor_", a));
    out.vocab.object_classes.push_back(padded_name("actor_", a));
  }
  for (int r = 0; r < relation_count; ++r) {
    out.vocab.relation_classes.push_back(
        RelationClass{padded_name("rel_", r), objectless[static_cast<std::size_t>(r)] != 0});
  }

  const int n_subject = config.agents;
  const int n_object = config.agents;

  // Truth tracklets, one per script entry; queries are entry indices.
  for (std::size_t e = 0; e < config.script.size(); ++e) {
    const ScriptEntry& entry = config.script[e];
    Tracklet t;
    t.video_id = out.video_id;
    t.triplet.subject_cls = entry.subject_agent;
    if (entry.object_agent) t.triplet.object_cls = *entry.object_agent;
    t.triplet.relation = entry.relation;
    t.interval = entry.interval;
    for (int f = entry.interval.start; f <= entry.interval.end; ++f) {
      t.subject_boxes.push_back(synth_detail::agent_box(config.seed, entry.subject_agent, f));
      if (entry.object_agent) {
        t.object_boxes.push_back(synth_detail::agent_box(config.seed, *entry.object_agent, f));
      }
    }
    t.score = 1.0;
    t.query = static_cast<int>(e);
    out.truth.push_back(std::move(t));
  }

  for (int f = 0; f < config.frames; ++f) {
    FrameGroundTruth gt;
    gt.video_id = out.video_id;
    gt.frame_idx = f;
    gt.width = config.frame_width;
    gt.height = config.frame_height;

    FramePrediction pred;
    pred.video_id = out.video_id;
    pred.frame_idx = f;

    std::vector<char> query_used(static_cast<std::size_t>(config.num_queries), 0);
    for (std::size_t e = 0; e < config.script.size(); ++e) {
      const ScriptEntry& entry = config.script[e];
      if (!entry.interval.contains(f)) continue;

      GtTriplet trip;
      trip.subject.id = entry.subject_agent;
      trip.subject.cls = entry.subject_agent;
      trip.subject.box = synth_detail::agent_box(config.seed, entry.subject_agent, f);
      if (entry.object_agent) {
        GtEntity obj;
        obj.id = *entry.object_agent;
        obj.cls = *entry.object_agent;
        obj.box = synth_detail::agent_box(config.seed, *entry.object_agent, f);
        trip.object = obj;
      }
      trip.relation = entry.relation;

      const auto fu = static_cast<std::uint64_t>(f);
      if (synth_detail::uniform01(config.seed, kDrop, fu, e) >= config.drop_prob) {
        QueryPrediction qp;
        qp.query = static_cast<int>(e);
        query_used[e] = 1;
        qp.subject_probs.assign(static_cast<std::size_t>(n_subject) + 1, 0.0);
        qp.subject_probs[static_cast<std::size_t>(trip.subject.cls)] = 1.0;
        qp.object_probs.assign(static_cast<std::size_t>(n_object) + 1, 0.0);
        if (trip.object) {
          qp.object_probs[static_cast<std::size_t>(trip.object->cls)] = 1.0;
        } else {
          qp.object_probs.back() = 1.0;
        }
        int rel = trip.relation;
        if (relation_count > 1 &&
            synth_detail::uniform01(config.seed, kFlip, fu, e) < config.flip_prob) {
          int pick = static_cast<int>(synth_detail::uniform01(config.seed, kFlipPick, fu, e) *
                                      (relation_count - 1));
          pick = std::min(pick, relation_count - 2);
          if (pick >= rel) ++pick;
          rel = pick;
        }
        qp.relation_probs.assign(static_cast<std::size_t>(relation_count), 0.0);
        qp.relation_probs[static_cast<std::size_t>(rel)] = 1.0;

        qp.subject_box = jittered(trip.subject.box, config.jitter_sigma, config.seed, fu, e * 2);
        if (trip.object) {
          qp.object_box = jittered(trip.object->box, config.jitter_sigma, config.seed, fu, e * 2 + 1);
          qp.union_box = union_box(qp.subject_box, qp.object_box);
        } else {
          qp.object_box = qp.subject_box;  // placeholder, ignored downstream
        }
        pred.predictions.push_back(std::move(qp));
      }

      gt.triplets.push_back(std::move(trip));
    }

    if (config.emit_background) {
      for (int q = 0; q < config.num_queries; ++q) {
        if (query_used[static_cast<std::size_t>(q)]) continue;
        QueryPrediction qp;
        qp.query = q;
        qp.subject_probs.assign(static_cast<std::size_t>(n_subject) + 1, 0.0);
        qp.subject_probs.back() = 1.0;
        qp.object_probs.assign(static_cast<std::size_t>(n_object) + 1, 0.0);
        qp.object_probs.back() = 1.0;
        qp.relation_probs.assign(static_cast<std::size_t>(relation_count),
                                 1.0 / relation_count);
        qp.subject_box = Box{0.5, 0.5, 0.5, 0.5};
        qp.object_box = Box{0.5, 0.5, 0.5, 0.5};
        pred.predictions.push_back(std::move(qp));
      }
      std::sort(pred.predictions.begin(), pred.predictions.end(),
                [](const QueryPrediction& a, const QueryPrediction& b) { return a.query < b.query; });
    }

    out.gt.push_back(std::move(gt));
    out.predictions.push_back(std::move(pred));
  }
  return out;
}

std::vector<ScriptEntry> auto_script(std::uint64_t seed, int agents, int frames, int entries,
                                     int relations) {
  if (agents < 1 || frames < 1 || entries < 0 || relations < 1) {
    throw ValidationError("auto_script: invalid parameters");
  }
  // relations in [cut, relations) are objectless; none when relations == 1
  const int cut = relations == 1 ? 1 : std::max(1, (3 * relations) / 4);
  std::vector<ScriptEntry> script;
  script.reserve(static_cast<std::size_t>(entries));
  for (int e = 0; e < entries; ++e) {
    const auto eu = static_cast<std::uint64_t>(e);
    ScriptEntry entry;
    entry.subject_agent =
        std::min(agents - 1, static_cast<int>(synth_detail::uniform01(seed, kScript, eu, 0) * agents));
    const bool objectless =
        cut < relations && synth_detail::uniform01(seed, kScript, eu, 1) < 0.25;
    if (!objectless) {
      entry.object_agent = std::min(
          agents - 1, static_cast<int>(synth_detail::uniform01(seed, kScript, eu, 2) * agents));
      entry.relation =
          std::min(cut - 1, static_cast<int>(synth_detail::uniform01(seed, kScript, eu, 3) * cut));
    } else {
      entry.relation =
          cut + std::min(relations - cut - 1,
                         static_cast<int>(synth_detail::uniform01(seed, kScript, eu, 3) *
                                          (relations - cut)));
    }
    const int start =
        std::min(frames - 1, static_cast<int>(synth_detail::uniform01(seed, kScript, eu, 4) * frames));
    const int max_len = frames - start;
    const int len = 1 + std::min(max_len - 1, static_cast<int>(synth_detail::uniform01(
                                                  seed, kScript, eu, 5) * max_len));
    entry.interval = Interval{start, start + len - 1};
    script.push_back(entry);
  }
  return script;
}

}  // namespace tcdsg
