#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "boxdiff/assignment.hpp"
#include "boxdiff/corruption.hpp"
#include "boxdiff/denoiser.hpp"
#include "boxdiff/schedule.hpp"
#include "boxdiff/synthdata.hpp"

namespace boxdiff {

struct TrainConfig {
    int epochs = 30;
    int n_train = 16;
    double scale = 2.0;
    PaddingStrategy padding = PaddingStrategy::CatGaussian;
    int top_k = 5;
    CostWeights weights;
    FocalConfig focal;
    AdamWConfig adamw;
    double clip_norm = 1.0;  // <= 0 disables clipping
    std::uint64_t seed = 0;
    int grid = 16;
};

struct EpochStats {
    int epoch = 0;
    double total = 0.0;
    double cls = 0.0;
    double l1 = 0.0;
    double giou = 0.0;
    std::int64_t step = 0;
};

/// One pass of the training recipe: corrupt ground truth at a random
/// timestep, decode, match each stage's predictions top-k, backpropagate the
/// summed stage losses, and take an AdamW step per scene. Aborts with a
/// diagnostic if the loss goes non-finite.
std::vector<EpochStats> train(DetectionHead& head, const std::vector<Scene>& dataset,
                              const Schedule& schedule, const TrainConfig& config,
                              const std::function<void(const EpochStats&)>& on_epoch = {});

}  // namespace boxdiff
