#include "boxdiff/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace boxdiff {

namespace {

Tensor sigmoid_probs(const Tensor& logits) {
    Tensor probs = logits;
    for (auto& v : probs.data) {
        v = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
    }
    return probs;
}

}  // namespace

std::vector<EpochStats> train(DetectionHead& head, const std::vector<Scene>& dataset,
                              const Schedule& schedule, const TrainConfig& config,
                              const std::function<void(const EpochStats&)>& on_epoch) {
    if (dataset.empty()) throw std::invalid_argument("train: empty dataset");

    // Rasterization is deterministic; cache it across epochs.
    std::vector<FeatureGrid> features;
    features.reserve(dataset.size());
    for (const Scene& scene : dataset) {
        features.push_back(rasterize(scene, scene.num_classes + 2, config.grid, config.grid));
    }

    Rng rng(config.seed);
    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    std::vector<EpochStats> log;
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        EpochStats stats;
        stats.epoch = epoch;
        for (std::size_t idx : order) {
            const Scene& scene = dataset[idx];
            const DiffusedBatch batch =
                corrupt(scene.boxes, scene.labels, config.n_train, config.padding,
                        config.scale, schedule, rng);

            Tape tape;
            const std::vector<StageTrace> traces =
                head.forward(tape, features[idx], batch.z_t, batch.t);

            std::vector<std::pair<int, Tensor>> seeds;
            SetLossParts scene_parts;
            for (const StageTrace& trace : traces) {
                const Tensor probs = sigmoid_probs(trace.logits);
                const Tensor cost = pairwise_cost(trace.boxes, probs, batch.gt_boxes,
                                                  batch.gt_labels, config.weights, config.focal);
                const MatchResult match = assign_topk(cost, config.top_k);
                SetLossGrads slg =
                    set_loss_with_grad(trace.boxes, trace.logits, match, batch.gt_boxes,
                                       batch.gt_labels, config.weights, config.focal);
                scene_parts.total += slg.parts.total;
                scene_parts.cls += slg.parts.cls;
                scene_parts.l1 += slg.parts.l1;
                scene_parts.giou += slg.parts.giou;
                seeds.emplace_back(trace.boxes_node, std::move(slg.d_boxes));
                seeds.emplace_back(trace.logits_node, std::move(slg.d_logits));
            }

            if (!std::isfinite(scene_parts.total)) {
                throw std::runtime_error(
                    "train: non-finite loss at epoch " + std::to_string(epoch) + ", scene " +
                    std::to_string(scene.image_id) + ", t=" + std::to_string(batch.t));
            }

            tape.backward(seeds);
            if (config.clip_norm > 0.0) clip_grad_norm(head.params(), config.clip_norm);
            adamw_step(head.params(), config.adamw);

            stats.total += scene_parts.total;
            stats.cls += scene_parts.cls;
            stats.l1 += scene_parts.l1;
            stats.giou += scene_parts.giou;
        }
        const double n = static_cast<double>(dataset.size());
        stats.total /= n;
        stats.cls /= n;
        stats.l1 /= n;
        stats.giou /= n;
        stats.step = head.params().step;
        log.push_back(stats);
        if (on_epoch) on_epoch(stats);
    }
    return log;
}

}  // namespace boxdiff
