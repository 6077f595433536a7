#include "boxdiff/assignment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace boxdiff {

namespace {

constexpr double kProbFloor = 1e-8;

double floored(double p) { return std::clamp(p, kProbFloor, 1.0 - kProbFloor); }

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double mean_abs_diff(const Box& a, const Box& b) {
    return (std::abs(a.cx - b.cx) + std::abs(a.cy - b.cy) + std::abs(a.w - b.w) +
            std::abs(a.h - b.h)) / 4.0;
}

}  // namespace

double focal_term(double p, bool is_positive, double alpha, double gamma) {
    p = floored(p);
    if (is_positive) return -alpha * std::pow(1.0 - p, gamma) * std::log(p);
    return -(1.0 - alpha) * std::pow(p, gamma) * std::log(1.0 - p);
}

double focal_term_grad_logit(double p, bool is_positive, double alpha, double gamma) {
    p = floored(p);
    if (is_positive) {
        return alpha * std::pow(1.0 - p, gamma) * (gamma * p * std::log(p) - (1.0 - p));
    }
    return (1.0 - alpha) * std::pow(p, gamma) * (p - gamma * (1.0 - p) * std::log(1.0 - p));
}

Tensor pairwise_cost(const std::vector<Box>& pred_boxes, const Tensor& pred_class_probs,
                     const std::vector<Box>& gt_boxes, const std::vector<int>& gt_labels,
                     const CostWeights& w, const FocalConfig& focal) {
    const auto n_pred = static_cast<std::int64_t>(pred_boxes.size());
    const auto n_gt = static_cast<std::int64_t>(gt_boxes.size());
    if (gt_boxes.size() != gt_labels.size()) {
        throw std::invalid_argument("pairwise_cost: gt boxes/labels length mismatch");
    }
    if (pred_class_probs.shape.size() != 2 || pred_class_probs.rows() != n_pred) {
        throw std::invalid_argument("pairwise_cost: probs shape mismatch");
    }
    Tensor cost = Tensor::matrix(n_pred, n_gt);
    if (n_gt == 0) return cost;
    for (std::int64_t i = 0; i < n_pred; ++i) {
        const CornerBox pc = to_corners(pred_boxes[static_cast<std::size_t>(i)]);
        for (std::int64_t j = 0; j < n_gt; ++j) {
            const int label = gt_labels[static_cast<std::size_t>(j)];
            if (label < 0 || label >= pred_class_probs.cols()) {
                throw std::invalid_argument("pairwise_cost: label out of range");
            }
            const double p = pred_class_probs.at(i, label);
            const Box& gb = gt_boxes[static_cast<std::size_t>(j)];
            const double c_cls = focal_term(p, true, focal.alpha, focal.gamma);
            const double c_l1 = mean_abs_diff(pred_boxes[static_cast<std::size_t>(i)], gb);
            const double c_giou = 1.0 - giou(pc, to_corners(gb));
            cost.at(i, j) = w.lambda_cls * c_cls + w.lambda_l1 * c_l1 + w.lambda_giou * c_giou;
        }
    }
    return cost;
}

MatchResult assign_topk(const Tensor& cost, int k) {
    if (k < 1) throw std::invalid_argument("assign_topk: k must be >= 1");
    MatchResult result;
    if (cost.shape.size() != 2) {
        // empty cost matrix: no predictions at all
        return result;
    }
    const std::int64_t n_pred = cost.rows();
    const std::int64_t n_gt = cost.shape[1];

    // best claim per prediction: (gt index, cost); -1 when unclaimed
    std::vector<int> claimed_by(static_cast<std::size_t>(n_pred), -1);
    std::vector<double> claim_cost(static_cast<std::size_t>(n_pred), 0.0);

    std::vector<std::int64_t> order(static_cast<std::size_t>(n_pred));
    for (std::int64_t j = 0; j < n_gt; ++j) {
        std::iota(order.begin(), order.end(), std::int64_t{0});
        std::stable_sort(order.begin(), order.end(), [&](std::int64_t a, std::int64_t b) {
            return cost.at(a, j) < cost.at(b, j);
        });
        const auto take = std::min<std::int64_t>(k, n_pred);
        for (std::int64_t r = 0; r < take; ++r) {
            const auto i = static_cast<std::size_t>(order[static_cast<std::size_t>(r)]);
            const double c = cost.at(order[static_cast<std::size_t>(r)], j);
            if (claimed_by[i] < 0 || c < claim_cost[i]) {
                claimed_by[i] = static_cast<int>(j);
                claim_cost[i] = c;
            }
        }
    }

    for (std::int64_t i = 0; i < n_pred; ++i) {
        const auto si = static_cast<std::size_t>(i);
        if (claimed_by[si] >= 0) {
            result.pairs.emplace_back(static_cast<int>(i), claimed_by[si]);
        } else {
            result.negatives.push_back(static_cast<int>(i));
        }
    }
    return result;
}

std::array<double, 4> giou_grad(const Box& pred, const Box& target) {
    const CornerBox p = to_corners(pred);
    const CornerBox g = to_corners(target);

    const double ap = p.area();
    const double ag = g.area();
    const double iw = std::min(p.x1, g.x1) - std::max(p.x0, g.x0);
    const double ih = std::min(p.y1, g.y1) - std::max(p.y0, g.y0);
    const bool overlap = iw > 0.0 && ih > 0.0;
    const double inter = overlap ? iw * ih : 0.0;
    const double uni = ap + ag - inter;
    const double cw = std::max(p.x1, g.x1) - std::min(p.x0, g.x0);
    const double ch = std::max(p.y1, g.y1) - std::min(p.y0, g.y0);
    const double hull = cw * ch;

    // Corner-space partials of intersection, own area, and hull.
    double di_x0 = 0.0, di_x1 = 0.0, di_y0 = 0.0, di_y1 = 0.0;
    if (overlap) {
        di_x0 = (p.x0 >= g.x0) ? -ih : 0.0;
        di_x1 = (p.x1 <= g.x1) ? ih : 0.0;
        di_y0 = (p.y0 >= g.y0) ? -iw : 0.0;
        di_y1 = (p.y1 <= g.y1) ? iw : 0.0;
    }
    const double h = p.y1 - p.y0;
    const double wdt = p.x1 - p.x0;
    const double da_x0 = -h, da_x1 = h, da_y0 = -wdt, da_y1 = wdt;
    const double dc_x0 = (p.x0 <= g.x0) ? -ch : 0.0;
    const double dc_x1 = (p.x1 >= g.x1) ? ch : 0.0;
    const double dc_y0 = (p.y0 <= g.y0) ? -cw : 0.0;
    const double dc_y1 = (p.y1 >= g.y1) ? cw : 0.0;

    // giou = I/U - 1 + U/C
    const auto combine = [&](double di, double da, double dc) {
        const double du = da - di;
        double out = 0.0;
        if (uni > 0.0) out += di / uni - inter * du / (uni * uni);
        if (hull > 0.0) out += du / hull - uni * dc / (hull * hull);
        return out;
    };
    const double gx0 = combine(di_x0, da_x0, dc_x0);
    const double gx1 = combine(di_x1, da_x1, dc_x1);
    const double gy0 = combine(di_y0, da_y0, dc_y0);
    const double gy1 = combine(di_y1, da_y1, dc_y1);

    // x0 = cx - w/2, x1 = cx + w/2 and the y analogue.
    return {gx0 + gx1, gy0 + gy1, (gx1 - gx0) / 2.0, (gy1 - gy0) / 2.0};
}

namespace {

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

SetLossGrads set_loss_impl(const std::vector<Box>& pred_boxes, const Tensor& pred_logits,
                           const MatchResult& match, const std::vector<Box>& gt_boxes,
                           const std::vector<int>& gt_labels, const CostWeights& w,
                           const FocalConfig& focal, bool want_grads) {
    const auto n_pred = static_cast<std::int64_t>(pred_boxes.size());
    const std::int64_t n_cls = pred_logits.shape.size() == 2 ? pred_logits.cols() : 0;
    if (pred_logits.shape.size() != 2 || pred_logits.rows() != n_pred) {
        throw std::invalid_argument("set_loss: logits shape mismatch");
    }

    // matched GT per prediction, -1 for background
    std::vector<int> target(static_cast<std::size_t>(n_pred), -1);
    for (const auto& [pi, gj] : match.pairs) {
        if (pi < 0 || pi >= n_pred || gj < 0 ||
            gj >= static_cast<int>(gt_boxes.size())) {
            throw std::invalid_argument("set_loss: match index out of range");
        }
        target[static_cast<std::size_t>(pi)] = gj;
    }

    const double n_pos = static_cast<double>(match.pairs.size());
    const double denom = std::max(1.0, n_pos);

    SetLossGrads out;
    if (want_grads) {
        out.d_boxes = Tensor::matrix(n_pred, 4);
        out.d_logits = Tensor::matrix(n_pred, n_cls);
    }

    double cls_sum = 0.0;
    for (std::int64_t i = 0; i < n_pred; ++i) {
        const int tgt = target[static_cast<std::size_t>(i)];
        const int tgt_label = tgt >= 0 ? gt_labels[static_cast<std::size_t>(tgt)] : -1;
        for (std::int64_t c = 0; c < n_cls; ++c) {
            const double p = sigmoid(pred_logits.at(i, c));
            const bool positive = tgt_label == static_cast<int>(c);
            cls_sum += focal_term(p, positive, focal.alpha, focal.gamma);
            if (want_grads) {
                out.d_logits.at(i, c) = w.lambda_cls / denom *
                                        focal_term_grad_logit(p, positive, focal.alpha, focal.gamma);
            }
        }
    }

    double l1_sum = 0.0, giou_sum = 0.0;
    for (const auto& [pi, gj] : match.pairs) {
        const Box& pb = pred_boxes[static_cast<std::size_t>(pi)];
        const Box& gb = gt_boxes[static_cast<std::size_t>(gj)];
        l1_sum += mean_abs_diff(pb, gb);
        giou_sum += 1.0 - giou(to_corners(pb), to_corners(gb));
        if (want_grads) {
            const auto gg = giou_grad(pb, gb);
            const std::array<double, 4> diff{pb.cx - gb.cx, pb.cy - gb.cy, pb.w - gb.w,
                                             pb.h - gb.h};
            for (int k = 0; k < 4; ++k) {
                const double dl1 = sign(diff[static_cast<std::size_t>(k)]) / 4.0;
                const double dgiou = -gg[static_cast<std::size_t>(k)];
                out.d_boxes.at(pi, k) +=
                    (w.lambda_l1 * dl1 + w.lambda_giou * dgiou) / denom;
            }
        }
    }

    out.parts.cls = cls_sum / denom;
    out.parts.l1 = l1_sum / denom;
    out.parts.giou = giou_sum / denom;
    out.parts.total = w.lambda_cls * out.parts.cls + w.lambda_l1 * out.parts.l1 +
                      w.lambda_giou * out.parts.giou;
    return out;
}

}  // namespace

SetLossParts set_loss(const std::vector<Box>& pred_boxes, const Tensor& pred_logits,
                      const MatchResult& match, const std::vector<Box>& gt_boxes,
                      const std::vector<int>& gt_labels, const CostWeights& w,
                      const FocalConfig& focal) {
    return set_loss_impl(pred_boxes, pred_logits, match, gt_boxes, gt_labels, w, focal, false)
        .parts;
}

SetLossGrads set_loss_with_grad(const std::vector<Box>& pred_boxes, const Tensor& pred_logits,
                                const MatchResult& match, const std::vector<Box>& gt_boxes,
                                const std::vector<int>& gt_labels, const CostWeights& w,
                                const FocalConfig& focal) {
    return set_loss_impl(pred_boxes, pred_logits, match, gt_boxes, gt_labels, w, focal, true);
}

}  // namespace boxdiff
