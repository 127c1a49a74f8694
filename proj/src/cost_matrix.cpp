#include "tcdsg/cost_matrix.hpp"

#include <string>

#include "tcdsg/errors.hpp"

namespace tcdsg {

double class_cost(std::span<const double> probs, int gt_class) {
  if (gt_class < 0 || static_cast<std::size_t>(gt_class) >= probs.size()) {
    throw ValidationError("class_cost: class index " + std::to_string(gt_class) +
                          " out of range for distribution of size " +
                          std::to_string(probs.size()));
  }
  return -probs[static_cast<std::size_t>(gt_class)];
}

double box_cost(const Box& pred, const Box& gt, const CostWeights& weights) {
  return weights.box_l1_weight * box_l1(pred, gt) +
         weights.box_giou_weight * (1.0 - giou(pred, gt));
}

CostMatrix build_cost_matrix(const FramePrediction& preds, const FrameGroundTruth& gt,
                             const CostWeights& weights) {
  const int n_preds = static_cast<int>(preds.predictions.size());
  const int n_gt = static_cast<int>(gt.triplets.size());
  if (n_gt > n_preds) {
    throw InfeasibleError("frame " + std::to_string(gt.frame_idx) + " of video '" + gt.video_id +
                          "' has " + std::to_string(n_gt) + " ground-truth triplets but only " +
                          std::to_string(n_preds) + " predictions");
  }
  CostMatrix cost(n_preds, n_gt);
  for (int i = 0; i < n_preds; ++i) {
    const QueryPrediction& p = preds.predictions[static_cast<std::size_t>(i)];
    const Box pred_union =
        p.union_box ? *p.union_box : union_box(p.subject_box, p.object_box);
    for (int j = 0; j < n_gt; ++j) {
      const GtTriplet& t = gt.triplets[static_cast<std::size_t>(j)];
      double c = weights.w_s * class_cost(p.subject_probs, t.subject.cls) +
                 weights.w_r * class_cost(p.relation_probs, t.relation) +
                 weights.w_sub * box_cost(p.subject_box, t.subject.box, weights);
      if (t.object) {
        c += weights.w_o * class_cost(p.object_probs, t.object->cls) +
             weights.w_ob * box_cost(p.object_box, t.object->box, weights) +
             weights.w_ub * box_cost(pred_union, union_box(t.subject.box, t.object->box), weights);
      }
      cost.at(i, j) = c;
    }
  }
  return cost;
}

}  // namespace tcdsg
