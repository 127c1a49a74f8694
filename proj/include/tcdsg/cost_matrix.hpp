#pragma once

#include <span>
#include <vector>

#include "tcdsg/schema.hpp"

namespace tcdsg {

// Per-term weights of the matching cost. Classification terms use negative
// probability; box terms combine L1 and (1 - giou).
struct CostWeights {
  double w_o = 1.0;    // object class
  double w_s = 1.0;    // subject class
  double w_r = 1.0;    // relation class
  double w_ob = 1.0;   // object box
  double w_sub = 1.0;  // subject box
  double w_ub = 1.0;   // union box
  double box_l1_weight = 5.0;
  double box_giou_weight = 2.0;
};

// Dense row-major cost matrix. Rows follow the frame's prediction list
// (one row per emitted query), columns follow the ground-truth triplet list.
struct CostMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> values;

  CostMatrix() = default;
  CostMatrix(int r, int c) : rows(r), cols(c), values(static_cast<std::size_t>(r) * c, 0.0) {}

  double& at(int r, int c) { return values[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return values[static_cast<std::size_t>(r) * cols + c]; }
};

// -probs[gt_class]: a confident correct prediction is cheap. Throws
// ValidationError when the index is out of range.
double class_cost(std::span<const double> probs, int gt_class);

double box_cost(const Box& pred, const Box& gt, const CostWeights& weights);

// Weighted sum of the six cost components. Objectless ground-truth triplets
// skip the object-class, object-box and union-box terms. Predictions that
// omit their union box fall back to the union of their subject/object boxes.
// Throws InfeasibleError when the frame has more triplets than predictions.
CostMatrix build_cost_matrix(const FramePrediction& preds, const FrameGroundTruth& gt,
                             const CostWeights& weights);

}  // namespace tcdsg
