#pragma once

#include <cstddef>
#include <vector>

namespace boxdiff {

// Smallest box side kept after clamping. Noise-born degenerate boxes are
// snapped to this instead of being dropped so IoU/GIoU stay well defined.
inline constexpr double kMinBoxSide = 1e-4;

/// One bounding box in normalized center/size form. All components are
/// fractions of the image extent: cx, cy in [0,1], w, h in (0,1].
struct Box {
    double cx = 0.0;
    double cy = 0.0;
    double w = 0.0;
    double h = 0.0;
};

/// Axis-aligned box in corner form, x0 <= x1 and y0 <= y1.
struct CornerBox {
    double x0 = 0.0;
    double y0 = 0.0;
    double x1 = 0.0;
    double y1 = 0.0;

    double area() const { return (x1 - x0) * (y1 - y0); }
};

CornerBox to_corners(const Box& b);
Box from_corners(const CornerBox& c);

/// Clamp cx, cy to [0,1] and w, h to [kMinBoxSide, 1].
Box clamp_box(const Box& b);

double iou(const CornerBox& a, const CornerBox& b);

/// IoU minus the empty fraction of the smallest enclosing box; in (-1, 1].
double giou(const CornerBox& a, const CornerBox& b);

/// Greedy descending-score non-maximum suppression. Returns indices of kept
/// boxes in score order; ties break toward the lower index.
std::vector<std::size_t> nms(const std::vector<CornerBox>& boxes,
                             const std::vector<double>& scores,
                             double iou_threshold);

}  // namespace boxdiff
