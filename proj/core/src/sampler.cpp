#include "boxdiff/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "boxdiff/corruption.hpp"

namespace boxdiff {

std::vector<std::pair<int, int>> time_pairs(int T, int steps) {
    if (steps < 1) throw std::invalid_argument("time_pairs: steps must be >= 1");
    if (steps > T) throw std::invalid_argument("time_pairs: steps must be <= T");
    // steps + 1 evenly spaced values on [-1, T-1], truncated to integers.
    std::vector<int> times(static_cast<std::size_t>(steps) + 1);
    for (int i = 0; i <= steps; ++i) {
        const double v = -1.0 + static_cast<double>(T) * i / steps;
        times[static_cast<std::size_t>(i)] = static_cast<int>(v);
    }
    std::vector<std::pair<int, int>> pairs;
    pairs.reserve(static_cast<std::size_t>(steps));
    for (int i = steps; i >= 1; --i) {
        pairs.emplace_back(times[static_cast<std::size_t>(i)],
                           times[static_cast<std::size_t>(i - 1)]);
    }
    return pairs;
}

Tensor box_renewal(const Tensor& z, const std::vector<double>& scores, double threshold,
                   int /*t_next*/, const Schedule& /*schedule*/, Rng& rng) {
    if (scores.size() != static_cast<std::size_t>(z.rows())) {
        throw std::invalid_argument("box_renewal: scores/boxes length mismatch");
    }
    Tensor out = z;
    for (std::int64_t i = 0; i < z.rows(); ++i) {
        if (scores[static_cast<std::size_t>(i)] >= threshold) continue;
        for (std::int64_t j = 0; j < z.cols(); ++j) out.at(i, j) = draw_normal(rng);
    }
    return out;
}

namespace {

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

struct RawDetection {
    Box box;
    double score;
    int label;
};

/// Per-class greedy NMS over the pooled per-step detections.
Detections nms_ensemble(std::vector<RawDetection> raw, double iou_threshold) {
    Detections out;
    if (raw.empty()) return out;
    int max_label = 0;
    for (const auto& d : raw) max_label = std::max(max_label, d.label);
    for (int cls = 0; cls <= max_label; ++cls) {
        std::vector<CornerBox> boxes;
        std::vector<double> scores;
        std::vector<std::size_t> src;
        for (std::size_t i = 0; i < raw.size(); ++i) {
            if (raw[i].label != cls) continue;
            boxes.push_back(to_corners(raw[i].box));
            scores.push_back(raw[i].score);
            src.push_back(i);
        }
        for (std::size_t keep : nms(boxes, scores, iou_threshold)) {
            const RawDetection& d = raw[src[keep]];
            out.boxes.push_back(d.box);
            out.scores.push_back(d.score);
            out.labels.push_back(d.label);
        }
    }
    return out;
}

}  // namespace

Detections sample(const FeatureGrid& features, const BoxDenoiser& decoder,
                  const Schedule& schedule, const SamplerConfig& config, Rng& rng) {
    if (config.n_eval < 1) throw std::invalid_argument("sample: n_eval must be >= 1");

    Tensor z = Tensor::matrix(config.n_eval, 4);
    for (auto& v : z.data) v = draw_normal(rng);

    std::vector<RawDetection> collected;
    for (const auto& [t_now, t_next] : time_pairs(schedule.T, config.steps)) {
        Tensor z_in = z;
        for (auto& v : z_in.data) v = std::clamp(v, -config.scale, config.scale);

        // Sampler times are offset one below the schedule index.
        const DecoderOutput pred = decoder.denoise(features, z_in, t_now + 1);

        std::vector<double> step_scores(static_cast<std::size_t>(config.n_eval));
        std::vector<int> step_labels(static_cast<std::size_t>(config.n_eval));
        for (std::int64_t i = 0; i < config.n_eval; ++i) {
            double best = -std::numeric_limits<double>::infinity();
            int best_c = 0;
            for (std::int64_t c = 0; c < pred.logits.cols(); ++c) {
                if (pred.logits.at(i, c) > best) {
                    best = pred.logits.at(i, c);
                    best_c = static_cast<int>(c);
                }
            }
            step_scores[static_cast<std::size_t>(i)] = sigmoid(best);
            step_labels[static_cast<std::size_t>(i)] = best_c;
        }

        const std::vector<Box> step_boxes = signal_to_boxes(pred.boxes, config.scale);
        for (std::int64_t i = 0; i < config.n_eval; ++i) {
            const auto si = static_cast<std::size_t>(i);
            if (step_scores[si] < config.detection_threshold) continue;
            collected.push_back({step_boxes[si], step_scores[si], step_labels[si]});
        }

        if (config.use_ddim) {
            Tensor noise = Tensor::matrix(config.n_eval, 4);
            for (auto& v : noise.data) v = draw_normal(rng);
            z = ddim_step(schedule, z_in, pred.boxes, t_now + 1, t_next + 1, config.eta, noise);
        } else {
            z = pred.boxes;
        }
        if (config.use_renewal) {
            z = box_renewal(z, step_scores, config.renewal_threshold, t_next, schedule, rng);
        }
    }

    return nms_ensemble(std::move(collected), config.ensemble_nms_iou);
}

std::vector<SweepCell> dynamic_eval(const FeatureGrid& features, const BoxDenoiser& decoder,
                                    const Schedule& schedule, const SamplerConfig& base,
                                    const std::vector<int>& n_eval_list,
                                    const std::vector<int>& steps_list, Rng& rng) {
    std::vector<SweepCell> cells;
    for (int n : n_eval_list) {
        for (int s : steps_list) {
            SamplerConfig config = base;
            config.n_eval = n;
            config.steps = s;
            SweepCell cell;
            cell.n_eval = n;
            cell.steps = s;
            cell.detections = sample(features, decoder, schedule, config, rng);
            cells.push_back(std::move(cell));
        }
    }
    return cells;
}

}  // namespace boxdiff
