#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "tcdsg/schema.hpp"

namespace tcdsg {

struct LossWeights {
  double lambda_g = 2.0;   // giou box term
  double lambda_l = 5.0;   // l1 box term
  double lambda_o = 1.0;   // subject/object cross-entropy
  double lambda_r = 2.0;   // relation focal loss
  double lambda_cs = 0.5;  // cosine contrastive term
};

struct FocalParams {
  double alpha = 0.25;
  double gamma = 2.0;
};

// Exponential running average of feature vectors per class. Slots start
// uninitialized; the first observation seeds the mean directly.
class RunningClassMeans {
 public:
  RunningClassMeans(int num_classes, double momentum = 0.9);

  int num_classes() const { return static_cast<int>(means_.size()); }
  double momentum() const { return momentum_; }
  bool initialized(int cls) const;
  int initialized_count() const { return initialized_count_; }
  const std::vector<double>& mean(int cls) const;

  // mu <- m*mu + (1-m)*v, or mu <- v on first observation.
  void update(int cls, std::span<const double> v);

 private:
  std::vector<std::vector<double>> means_;
  double momentum_;
  int initialized_count_ = 0;
};

double giou_loss(const Box& pred, const Box& gt);

// -log softmax(logits)[gt_class], numerically stabilized.
double ce_loss(std::span<const double> logits, int gt_class);

// Mean over classes of -alpha * (1-p_t)^gamma * log(p_t) with
// p_t = p for positive classes (nonzero target) and 1-p otherwise. Scores
// are clamped to [1e-7, 1-1e-7]; *clamped counts how many entries needed it.
double focal_loss(std::span<const double> scores, std::span<const std::uint8_t> targets,
                  double alpha, double gamma, int* clamped = nullptr);

double cosine_similarity(std::span<const double> a, std::span<const double> b);

// CS(v, mean_of(class_id)) minus the mean cosine similarity against every
// other initialized class mean. flip_sign negates the result for trainers
// that want low values to mean tight same-class clusters.
double contrastive_cs(std::span<const double> v, int class_id, const RunningClassMeans& means,
                      bool flip_sign = false);

// One matched (prediction, ground truth) pair as consumed by total_loss.
// Probabilities follow the prediction schema; relation scores may be any
// per-class values in (0,1).
struct LossPair {
  std::vector<double> subject_probs;
  std::vector<double> object_probs;
  std::vector<double> relation_scores;
  Box pred_subject_box;
  Box pred_object_box;
  std::optional<Box> pred_union_box;

  int gt_subject_cls = 0;
  std::optional<int> gt_object_cls;  // absent skips all object-related terms
  int gt_relation = 0;
  Box gt_subject_box;
  std::optional<Box> gt_object_box;

  // Decoder feature for the contrastive term, with its class slot.
  std::optional<std::vector<double>> feature;
  int feature_class = 0;
};

// An unmatched query, supervised toward the background class on both
// classification branches.
struct BackgroundPred {
  std::vector<double> subject_probs;
  std::vector<double> object_probs;
};

struct LossBreakdown {
  double giou = 0.0;
  double l1 = 0.0;
  double obj = 0.0;
  double rel = 0.0;
  double cs = 0.0;
  double total = 0.0;
};

struct LossDiagnostics {
  int clamped_scores = 0;  // focal inputs outside (0,1)
  int cs_pairs = 0;        // pairs that contributed to the cs term
  int cs_skipped = 0;      // featured pairs skipped for lack of initialized means
  bool empty = false;      // no pairs and no background queries
};

// Combines the per-term averages with the lambda weights:
//   total = lambda_g*giou + lambda_l*l1 + lambda_o*obj + lambda_r*rel + lambda_cs*cs
// Box terms average over (pair, box kind) with kinds {subject, object, union};
// objectless pairs contribute the subject kind only. The obj term averages
// cross-entropy over every supervised branch event, including background
// queries. Featured pairs are evaluated against the running means as they
// stand and then folded into them.
LossBreakdown total_loss(std::span<const LossPair> pairs,
                         std::span<const BackgroundPred> background, const LossWeights& weights,
                         const FocalParams& focal, RunningClassMeans& means,
                         bool flip_cs_sign = false, LossDiagnostics* diag = nullptr);

}  // namespace tcdsg
