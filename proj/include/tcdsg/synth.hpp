#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tcdsg/schema.hpp"

namespace tcdsg {

// One scripted activity: a (subject agent, object agent, relation) triple
// active over an inclusive frame interval.
struct ScriptEntry {
  int subject_agent = 0;
  std::optional<int> object_agent;
  int relation = 0;
  Interval interval;
};

struct SynthConfig {
  std::uint64_t seed = 0;
  int frames = 50;
  int agents = 3;
  std::vector<ScriptEntry> script;
  double jitter_sigma = 0.0;  // gaussian noise on prediction box corners
  double flip_prob = 0.0;     // chance of relabeling a prediction's relation
  double drop_prob = 0.0;     // chance of dropping a prediction for a frame
  int num_queries = 10;
  int relation_classes = 0;   // 0: derived from the script
  // Optional explicit objectless flags (one per relation class). Empty:
  // derived from how the script uses each relation. Explicit flags let
  // several videos generated from different scripts share one vocabulary.
  std::vector<char> objectless_relations;
  bool emit_background = false;  // pad frames to num_queries with background slots
  double frame_width = 1000.0;
  double frame_height = 1000.0;
  std::string video_id;  // default: "synth-<zero-padded seed>"
};

struct SynthOutput {
  std::vector<FrameGroundTruth> gt;
  std::vector<FramePrediction> predictions;
  std::vector<Tracklet> truth;  // one tracklet per script entry
  RelationVocab vocab;
  std::string video_id;
};

// Deterministic for a given config: agents follow piecewise-linear motion
// bouncing off the frame edges, ground truth lists each active script entry,
// and predictions re-encode the ground truth as one-hot distributions with
// the configured box jitter, relation flips and frame dropout. Each entry
// keeps a stable query index (its script position), so the zero-noise stream
// assembles back into exactly the truth tracklets.
SynthOutput generate(const SynthConfig& config);

// Deterministic random script: entry count activities over valid agents,
// intervals and relations. Relations in the upper quarter of the class range
// are used objectless (when more than one relation class exists).
std::vector<ScriptEntry> auto_script(std::uint64_t seed, int agents, int frames, int entries,
                                     int relations);

namespace synth_detail {

// Counter-based generators keyed by (seed, tag, indices): reproducible
// regardless of evaluation order.
double uniform01(std::uint64_t seed, std::uint64_t tag, std::uint64_t a, std::uint64_t b);
double normal01(std::uint64_t seed, std::uint64_t tag, std::uint64_t a, std::uint64_t b);

// Agent box at a frame, bouncing inside the unit square.
Box agent_box(std::uint64_t seed, int agent, int frame);

}  // namespace synth_detail

}  // namespace tcdsg
