#pragma once

#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tcdsg/schema.hpp"

namespace tcdsg {

// Line-delimited readers. Files must be grouped by video_id with strictly
// increasing frame_idx inside each video; violations raise ValidationError
// naming the offending line. Boxes are stored in pixels on disk for ground
// truth (checked against the line's width/height) and normalized to [0,1]
// in memory. Prediction boxes are written normalized.

class GtReader {
 public:
  explicit GtReader(const std::string& path, const RelationVocab* vocab = nullptr);
  ~GtReader();
  GtReader(GtReader&&) noexcept;
  GtReader& operator=(GtReader&&) noexcept;

  // Next frame record, or nullopt at end of file.
  std::optional<FrameGroundTruth> next();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

class PredReader {
 public:
  explicit PredReader(const std::string& path, const RelationVocab* vocab = nullptr);
  ~PredReader();
  PredReader(PredReader&&) noexcept;
  PredReader& operator=(PredReader&&) noexcept;

  std::optional<FramePrediction> next();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Whole-file conveniences for tests and small inputs.
std::vector<FrameGroundTruth> read_gt_stream(const std::string& path,
                                             const RelationVocab* vocab = nullptr);
std::vector<FramePrediction> read_pred_stream(const std::string& path,
                                              const RelationVocab* vocab = nullptr);

// Single-line serializers (no trailing newline), for streaming writers.
std::string to_jsonl_line(const FrameGroundTruth& frame);
std::string to_jsonl_line(const FramePrediction& frame);

void write_gt_stream(std::ostream& out, std::span<const FrameGroundTruth> frames);
void write_pred_stream(std::ostream& out, std::span<const FramePrediction> frames);

std::vector<Tracklet> read_tracklets(const std::string& path);
void write_tracklets(std::ostream& out, std::span<const Tracklet> tracklets);

RelationVocab read_vocab(const std::string& path);
void write_vocab(std::ostream& out, const RelationVocab& vocab);

// Bounding box from the extent (min/max coordinates) of a pixel point set.
Box mask_extent_to_box(std::span<const std::pair<double, double>> points,
                       double width, double height);

// Writes to "<path>.tmp" and renames into place on commit, so readers never
// observe a half-written file. Discards the temp file if never committed.
class AtomicFile {
 public:
  explicit AtomicFile(const std::string& path);
  ~AtomicFile();
  AtomicFile(const AtomicFile&) = delete;
  AtomicFile& operator=(const AtomicFile&) = delete;

  std::ostream& stream();
  void commit();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace tcdsg
