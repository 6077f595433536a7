#pragma once

#include <utility>
#include <vector>

#include "boxdiff/autodiff.hpp"
#include "boxdiff/denoiser.hpp"
#include "boxdiff/geometry.hpp"
#include "boxdiff/schedule.hpp"

namespace boxdiff {

struct SamplerConfig {
    int n_eval = 16;
    int steps = 1;
    double eta = 1.0;
    double renewal_threshold = 0.5;
    double ensemble_nms_iou = 0.5;
    double detection_threshold = 0.05;
    double scale = 2.0;
    bool use_ddim = true;
    bool use_renewal = true;
};

/// Final predictions for one image.
struct Detections {
    std::vector<Box> boxes;
    std::vector<double> scores;
    std::vector<int> labels;

    std::size_t size() const { return boxes.size(); }
};

/// Evenly spaced descending sampler times from T-1 down to the terminal -1,
/// paired consecutively: steps == 1 gives [(T-1, -1)], steps == T gives all
/// consecutive integers.
std::vector<std::pair<int, int>> time_pairs(int T, int steps);

/// Replace rows whose score falls below the threshold with fresh standard
/// normal draws; rows at or above the threshold pass through untouched.
Tensor box_renewal(const Tensor& z, const std::vector<double>& scores, double threshold,
                   int t_next, const Schedule& schedule, Rng& rng);

/// Iterative denoising from pure noise per the sampling loop: decode, DDIM
/// step toward the next time (or pass the prediction straight through when
/// DDIM is off), renew low-score boxes, and ensemble every step's
/// detections by per-class NMS.
Detections sample(const FeatureGrid& features, const BoxDenoiser& decoder,
                  const Schedule& schedule, const SamplerConfig& config, Rng& rng);

struct SweepCell {
    int n_eval = 0;
    int steps = 0;
    Detections detections;
};

/// Run sample over the cross product of box counts and step counts with one
/// decoder — no retraining between cells.
std::vector<SweepCell> dynamic_eval(const FeatureGrid& features, const BoxDenoiser& decoder,
                                    const Schedule& schedule, const SamplerConfig& base,
                                    const std::vector<int>& n_eval_list,
                                    const std::vector<int>& steps_list, Rng& rng);

}  // namespace boxdiff
