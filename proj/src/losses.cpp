#include "tcdsg/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tcdsg/errors.hpp"

namespace tcdsg {

namespace {

constexpr double kScoreClamp = 1e-7;
constexpr double kLogClamp = 1e-12;

double safe_neg_log(double p) { return -std::log(std::max(p, kLogClamp)); }

}  // namespace

RunningClassMeans::RunningClassMeans(int num_classes, double momentum)
    : means_(static_cast<std::size_t>(num_classes)), momentum_(momentum) {
  if (num_classes <= 0) throw ValidationError("RunningClassMeans: need at least one class");
  if (momentum <= 0.0 || momentum >= 1.0) {
    throw ValidationError("RunningClassMeans: momentum must lie in (0,1)");
  }
}

bool RunningClassMeans::initialized(int cls) const {
  return !means_.at(static_cast<std::size_t>(cls)).empty();
}

const std::vector<double>& RunningClassMeans::mean(int cls) const {
  const auto& m = means_.at(static_cast<std::size_t>(cls));
  if (m.empty()) {
    throw ValidationError("RunningClassMeans: class " + std::to_string(cls) + " uninitialized");
  }
  return m;
}

void RunningClassMeans::update(int cls, std::span<const double> v) {
  auto& m = means_.at(static_cast<std::size_t>(cls));
  if (m.empty()) {
    m.assign(v.begin(), v.end());
    ++initialized_count_;
    return;
  }
  if (m.size() != v.size()) {
    throw ValidationError("RunningClassMeans: feature dimension mismatch");
  }
  for (std::size_t i = 0; i < m.size(); ++i) {
    m[i] = momentum_ * m[i] + (1.0 - momentum_) * v[i];
  }
}

double giou_loss(const Box& pred, const Box& gt) { return 1.0 - giou(pred, gt); }

double ce_loss(std::span<const double> logits, int gt_class) {
  if (gt_class < 0 || static_cast<std::size_t>(gt_class) >= logits.size()) {
    throw ValidationError("ce_loss: class index out of range");
  }
  const double max_logit = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (const double l : logits) sum += std::exp(l - max_logit);
  return -(logits[static_cast<std::size_t>(gt_class)] - max_logit - std::log(sum));
}

double focal_loss(std::span<const double> scores, std::span<const std::uint8_t> targets,
                  double alpha, double gamma, int* clamped) {
  if (scores.size() != targets.size()) {
    throw ValidationError("focal_loss: scores and targets must have the same length");
  }
  if (scores.empty()) throw ValidationError("focal_loss: empty score vector");
  double sum = 0.0;
  int clamp_count = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    double p = scores[i];
    if (p < kScoreClamp || p > 1.0 - kScoreClamp) {
      p = std::clamp(p, kScoreClamp, 1.0 - kScoreClamp);
      ++clamp_count;
    }
    const double p_t = targets[i] != 0 ? p : 1.0 - p;
    sum += -alpha * std::pow(1.0 - p_t, gamma) * std::log(p_t);
  }
  if (clamped != nullptr) *clamped += clamp_count;
  return sum / static_cast<double>(scores.size());
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ValidationError("cosine_similarity: dimension mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na <= 0.0 || nb <= 0.0) throw ValidationError("cosine_similarity: zero-norm vector");
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

double contrastive_cs(std::span<const double> v, int class_id, const RunningClassMeans& means,
                      bool flip_sign) {
  if (!means.initialized(class_id)) {
    throw ValidationError("contrastive_cs: class " + std::to_string(class_id) +
                          " has no running mean yet");
  }
  const double same = cosine_similarity(v, means.mean(class_id));
  double other_sum = 0.0;
  int other_count = 0;
  for (int c = 0; c < means.num_classes(); ++c) {
    if (c == class_id || !means.initialized(c)) continue;
    other_sum += cosine_similarity(v, means.mean(c));
    ++other_count;
  }
  if (other_count == 0) {
    throw ValidationError("contrastive_cs: no other class mean initialized");
  }
  const double value = same - other_sum / static_cast<double>(other_count);
  return flip_sign ? -value : value;
}

LossBreakdown total_loss(std::span<const LossPair> pairs, std::span<const BackgroundPred> background,
                         const LossWeights& weights, const FocalParams& focal,
                         RunningClassMeans& means, bool flip_cs_sign, LossDiagnostics* diag) {
  LossDiagnostics local;
  LossDiagnostics& d = diag != nullptr ? *diag : local;
  d = LossDiagnostics{};

  double giou_sum = 0.0, l1_sum = 0.0;
  long box_events = 0;
  double ce_sum = 0.0;
  long ce_events = 0;
  double rel_sum = 0.0;
  long rel_events = 0;
  double cs_sum = 0.0;

  for (const LossPair& pair : pairs) {
    giou_sum += giou_loss(pair.pred_subject_box, pair.gt_subject_box);
    l1_sum += box_l1(pair.pred_subject_box, pair.gt_subject_box);
    ++box_events;
    ce_sum += safe_neg_log(pair.subject_probs.at(static_cast<std::size_t>(pair.gt_subject_cls)));
    ++ce_events;

    if (pair.gt_object_cls) {
      if (!pair.gt_object_box) {
        throw ValidationError("total_loss: pair has an object class but no object box");
      }
      giou_sum += giou_loss(pair.pred_object_box, *pair.gt_object_box);
      l1_sum += box_l1(pair.pred_object_box, *pair.gt_object_box);
      ++box_events;
      const Box pred_union = pair.pred_union_box
                                 ? *pair.pred_union_box
                                 : union_box(pair.pred_subject_box, pair.pred_object_box);
      const Box gt_union = union_box(pair.gt_subject_box, *pair.gt_object_box);
      giou_sum += giou_loss(pred_union, gt_union);
      l1_sum += box_l1(pred_union, gt_union);
      ++box_events;
      ce_sum += safe_neg_log(pair.object_probs.at(static_cast<std::size_t>(*pair.gt_object_cls)));
      ++ce_events;
    }

    if (pair.gt_relation < 0 ||
        static_cast<std::size_t>(pair.gt_relation) >= pair.relation_scores.size()) {
      throw ValidationError("total_loss: relation index out of range");
    }
    std::vector<std::uint8_t> targets(pair.relation_scores.size(), 0);
    targets[static_cast<std::size_t>(pair.gt_relation)] = 1;
    rel_sum += focal_loss(pair.relation_scores, targets, focal.alpha, focal.gamma,
                          &d.clamped_scores);
    ++rel_events;

    if (pair.feature) {
      bool computed = false;
      if (means.initialized(pair.feature_class) && means.initialized_count() >= 2) {
        cs_sum += contrastive_cs(*pair.feature, pair.feature_class, means, flip_cs_sign);
        ++d.cs_pairs;
        computed = true;
      }
      if (!computed) ++d.cs_skipped;
      means.update(pair.feature_class, *pair.feature);
    }
  }

  for (const BackgroundPred& bg : background) {
    if (bg.subject_probs.empty() || bg.object_probs.empty()) {
      throw ValidationError("total_loss: background prediction with empty distribution");
    }
    ce_sum += safe_neg_log(bg.subject_probs.back());
    ce_sum += safe_neg_log(bg.object_probs.back());
    ce_events += 2;
  }

  LossBreakdown out;
  if (pairs.empty() && background.empty()) d.empty = true;
  if (box_events > 0) {
    out.giou = giou_sum / static_cast<double>(box_events);
    out.l1 = l1_sum / static_cast<double>(box_events);
  }
  if (ce_events > 0) out.obj = ce_sum / static_cast<double>(ce_events);
  if (rel_events > 0) out.rel = rel_sum / static_cast<double>(rel_events);
  if (d.cs_pairs > 0) out.cs = cs_sum / static_cast<double>(d.cs_pairs);
  out.total = weights.lambda_g * out.giou + weights.lambda_l * out.l1 + weights.lambda_o * out.obj +
              weights.lambda_r * out.rel + weights.lambda_cs * out.cs;
  return out;
}

}  // namespace tcdsg
