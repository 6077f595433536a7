#pragma once

#include <array>
#include <string>
#include <vector>

#include "boxdiff/autodiff.hpp"
#include "boxdiff/geometry.hpp"
#include "boxdiff/schedule.hpp"
#include "boxdiff/tensor.hpp"

namespace boxdiff {

/// How ground truth is padded up to the fixed training cardinality.
enum class PaddingStrategy {
    Repeat,       // cycle through existing ground truth
    CatGaussian,  // Normal(0.5, 0.5^2) per component, clamped valid
    CatUniform,   // Uniform(0, 1) per component, clamped valid
    CatFull,      // whole-image boxes (0.5, 0.5, 1, 1)
};

const char* to_string(PaddingStrategy s);
PaddingStrategy padding_strategy_from_string(const std::string& s);

/// One corrupted training sample: noisy boxes in signal space at timestep t
/// plus the uncorrupted targets the loss will match against.
struct DiffusedBatch {
    Tensor z_t;  // [n_train, 4], clamped to [-scale, scale]
    int t = 0;   // schedule index in [1, T]
    std::vector<Box> gt_boxes;
    std::vector<int> gt_labels;
};

/// Pad (or truncate) gt to exactly n_train boxes. The original boxes come
/// first; the remainder is filled per the strategy. Repeat on empty gt falls
/// back to CatGaussian.
std::vector<Box> pad_boxes(const std::vector<Box>& gt, int n_train,
                           PaddingStrategy strategy, Rng& rng);

/// Affine map of one normalized coordinate into signal space: (2x - 1) * scale.
std::array<double, 4> scale_signal(const Box& b, double scale);

/// Inverse of scale_signal with clamping back into a valid Box.
Box unscale_signal(const std::array<double, 4>& x, double scale);

Tensor boxes_to_signal(const std::vector<Box>& boxes, double scale);
std::vector<Box> signal_to_boxes(const Tensor& z, double scale);

/// Training-side corruption: pad, scale, q_sample at a uniformly drawn
/// timestep, clamp to [-scale, scale].
DiffusedBatch corrupt(const std::vector<Box>& gt, const std::vector<int>& labels,
                      int n_train, PaddingStrategy strategy, double scale,
                      const Schedule& schedule, Rng& rng);

/// Same as corrupt but at a caller-chosen timestep.
DiffusedBatch corrupt_at(const std::vector<Box>& gt, const std::vector<int>& labels,
                         int n_train, PaddingStrategy strategy, double scale,
                         const Schedule& schedule, int t, Rng& rng);

}  // namespace boxdiff
