#pragma once

#include <array>
#include <utility>
#include <vector>

#include "boxdiff/geometry.hpp"
#include "boxdiff/tensor.hpp"

namespace boxdiff {

/// Weights balancing the classification, L1 and GIoU terms of both the
/// matching cost and the training loss.
struct CostWeights {
    double lambda_cls = 2.0;
    double lambda_l1 = 5.0;
    double lambda_giou = 2.0;
};

struct FocalConfig {
    double alpha = 0.25;
    double gamma = 2.0;
};

/// Outcome of top-k assignment. Every prediction index appears exactly once
/// across pairs and negatives; pairs are sorted by prediction index.
struct MatchResult {
    std::vector<std::pair<int, int>> pairs;  // (prediction, ground truth)
    std::vector<int> negatives;
};

/// Focal modulated cross-entropy for a single probability. p is floored
/// into [1e-8, 1 - 1e-8] before the log.
double focal_term(double p, bool is_positive, double alpha, double gamma);

/// d(focal_term)/d(logit) where p = sigmoid(logit); same flooring as the
/// forward term.
double focal_term_grad_logit(double p, bool is_positive, double alpha, double gamma);

/// N_pred x N_gt matching cost: lambda_cls * focal positive term for the GT
/// class + lambda_l1 * mean |difference| of cxcywh + lambda_giou * (1 - GIoU).
/// pred_class_probs holds per-class sigmoid probabilities, shape [N, classes].
Tensor pairwise_cost(const std::vector<Box>& pred_boxes, const Tensor& pred_class_probs,
                     const std::vector<Box>& gt_boxes, const std::vector<int>& gt_labels,
                     const CostWeights& w, const FocalConfig& focal);

/// Each ground truth claims its k cheapest predictions; a prediction claimed
/// by several ground truths goes to the one with the lowest cost for it
/// (ties to the lower GT index). Everything unclaimed is negative.
MatchResult assign_topk(const Tensor& cost, int k);

struct SetLossParts {
    double total = 0.0;
    double cls = 0.0;
    double l1 = 0.0;
    double giou = 0.0;
};

/// Multi-task set loss. Classification focal loss runs over every
/// prediction and class (positives target their matched class, negatives
/// background) normalized by the positive count (floored at 1); L1 and GIoU
/// run over matched pairs only, averaged the same way.
SetLossParts set_loss(const std::vector<Box>& pred_boxes, const Tensor& pred_logits,
                      const MatchResult& match, const std::vector<Box>& gt_boxes,
                      const std::vector<int>& gt_labels, const CostWeights& w,
                      const FocalConfig& focal);

struct SetLossGrads {
    SetLossParts parts;
    Tensor d_boxes;   // [N, 4] w.r.t. (cx, cy, w, h)
    Tensor d_logits;  // [N, classes]
};

/// set_loss plus analytic gradients of the total with respect to the
/// prediction boxes and logits (the match held fixed).
SetLossGrads set_loss_with_grad(const std::vector<Box>& pred_boxes, const Tensor& pred_logits,
                                const MatchResult& match, const std::vector<Box>& gt_boxes,
                                const std::vector<int>& gt_labels, const CostWeights& w,
                                const FocalConfig& focal);

/// d(GIoU)/d(pred cxcywh) with the other box fixed; used by the GIoU loss
/// term and exposed for gradient tests.
std::array<double, 4> giou_grad(const Box& pred, const Box& target);

}  // namespace boxdiff
