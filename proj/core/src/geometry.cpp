#include "boxdiff/geometry.hpp"

#include <algorithm>
#include <cassert>
#include <numeric>
#include <stdexcept>

namespace boxdiff {

CornerBox to_corners(const Box& b) {
    return {b.cx - b.w / 2.0, b.cy - b.h / 2.0, b.cx + b.w / 2.0, b.cy + b.h / 2.0};
}

Box from_corners(const CornerBox& c) {
    return {(c.x0 + c.x1) / 2.0, (c.y0 + c.y1) / 2.0, c.x1 - c.x0, c.y1 - c.y0};
}

Box clamp_box(const Box& b) {
    Box out = b;
    out.cx = std::clamp(out.cx, 0.0, 1.0);
    out.cy = std::clamp(out.cy, 0.0, 1.0);
    out.w = std::clamp(out.w, kMinBoxSide, 1.0);
    out.h = std::clamp(out.h, kMinBoxSide, 1.0);
    return out;
}

static double intersection_area(const CornerBox& a, const CornerBox& b) {
    const double iw = std::min(a.x1, b.x1) - std::max(a.x0, b.x0);
    const double ih = std::min(a.y1, b.y1) - std::max(a.y0, b.y0);
    if (iw <= 0.0 || ih <= 0.0) return 0.0;
    return iw * ih;
}

double iou(const CornerBox& a, const CornerBox& b) {
    const double inter = intersection_area(a, b);
    const double uni = a.area() + b.area() - inter;
    if (uni <= 0.0) return 0.0;
    return inter / uni;
}

double giou(const CornerBox& a, const CornerBox& b) {
    const double inter = intersection_area(a, b);
    const double uni = a.area() + b.area() - inter;
    const CornerBox hull{std::min(a.x0, b.x0), std::min(a.y0, b.y0),
                         std::max(a.x1, b.x1), std::max(a.y1, b.y1)};
    const double hull_area = hull.area();
    const double iou_term = uni > 0.0 ? inter / uni : 0.0;
    if (hull_area <= 0.0) return iou_term;
    return iou_term - (hull_area - uni) / hull_area;
}

std::vector<std::size_t> nms(const std::vector<CornerBox>& boxes,
                             const std::vector<double>& scores,
                             double iou_threshold) {
    if (boxes.size() != scores.size()) {
        throw std::invalid_argument("nms: boxes and scores length mismatch");
    }
    std::vector<std::size_t> order(boxes.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return scores[a] > scores[b];
    });

    std::vector<std::size_t> kept;
    std::vector<bool> suppressed(boxes.size(), false);
    for (std::size_t oi = 0; oi < order.size(); ++oi) {
        const std::size_t i = order[oi];
        if (suppressed[i]) continue;
        kept.push_back(i);
        for (std::size_t oj = oi + 1; oj < order.size(); ++oj) {
            const std::size_t j = order[oj];
            if (suppressed[j]) continue;
            if (iou(boxes[i], boxes[j]) > iou_threshold) suppressed[j] = true;
        }
    }
    return kept;
}

}  // namespace boxdiff
