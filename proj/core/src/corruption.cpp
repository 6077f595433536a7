#include "boxdiff/corruption.hpp"

#include <algorithm>
#include <iostream>
#include <stdexcept>

namespace boxdiff {

const char* to_string(PaddingStrategy s) {
    switch (s) {
        case PaddingStrategy::Repeat: return "repeat";
        case PaddingStrategy::CatGaussian: return "gaussian";
        case PaddingStrategy::CatUniform: return "uniform";
        case PaddingStrategy::CatFull: return "full";
    }
    return "?";
}

PaddingStrategy padding_strategy_from_string(const std::string& s) {
    if (s == "repeat") return PaddingStrategy::Repeat;
    if (s == "gaussian") return PaddingStrategy::CatGaussian;
    if (s == "uniform") return PaddingStrategy::CatUniform;
    if (s == "full") return PaddingStrategy::CatFull;
    throw std::invalid_argument("unknown padding strategy: " + s);
}

namespace {

Box gaussian_box(Rng& rng) {
    Box b;
    b.cx = 0.5 + 0.5 * draw_normal(rng);
    b.cy = 0.5 + 0.5 * draw_normal(rng);
    b.w = 0.5 + 0.5 * draw_normal(rng);
    b.h = 0.5 + 0.5 * draw_normal(rng);
    return clamp_box(b);
}

Box uniform_box(Rng& rng) {
    Box b{draw_uniform(rng), draw_uniform(rng), draw_uniform(rng), draw_uniform(rng)};
    return clamp_box(b);
}

}  // namespace

std::vector<Box> pad_boxes(const std::vector<Box>& gt, int n_train,
                           PaddingStrategy strategy, Rng& rng) {
    if (n_train < 1) throw std::invalid_argument("pad_boxes: n_train must be >= 1");
    const auto n = static_cast<std::size_t>(n_train);

    std::vector<Box> out;
    out.reserve(n);
    for (std::size_t i = 0; i < std::min(gt.size(), n); ++i) out.push_back(gt[i]);

    PaddingStrategy fill = strategy;
    if (fill == PaddingStrategy::Repeat && gt.empty()) fill = PaddingStrategy::CatGaussian;

    std::size_t cursor = 0;
    while (out.size() < n) {
        switch (fill) {
            case PaddingStrategy::Repeat:
                out.push_back(gt[cursor % gt.size()]);
                ++cursor;
                break;
            case PaddingStrategy::CatGaussian:
                out.push_back(gaussian_box(rng));
                break;
            case PaddingStrategy::CatUniform:
                out.push_back(uniform_box(rng));
                break;
            case PaddingStrategy::CatFull:
                out.push_back(Box{0.5, 0.5, 1.0, 1.0});
                break;
        }
    }
    return out;
}

std::array<double, 4> scale_signal(const Box& b, double scale) {
    return {(2.0 * b.cx - 1.0) * scale, (2.0 * b.cy - 1.0) * scale,
            (2.0 * b.w - 1.0) * scale, (2.0 * b.h - 1.0) * scale};
}

Box unscale_signal(const std::array<double, 4>& x, double scale) {
    Box b;
    b.cx = (x[0] / scale + 1.0) / 2.0;
    b.cy = (x[1] / scale + 1.0) / 2.0;
    b.w = (x[2] / scale + 1.0) / 2.0;
    b.h = (x[3] / scale + 1.0) / 2.0;
    return clamp_box(b);
}

Tensor boxes_to_signal(const std::vector<Box>& boxes, double scale) {
    Tensor z = Tensor::matrix(static_cast<std::int64_t>(boxes.size()), 4);
    for (std::size_t i = 0; i < boxes.size(); ++i) {
        const auto s = scale_signal(boxes[i], scale);
        for (int j = 0; j < 4; ++j) z.at(static_cast<std::int64_t>(i), j) = s[static_cast<std::size_t>(j)];
    }
    return z;
}

std::vector<Box> signal_to_boxes(const Tensor& z, double scale) {
    std::vector<Box> boxes(static_cast<std::size_t>(z.rows()));
    for (std::int64_t i = 0; i < z.rows(); ++i) {
        boxes[static_cast<std::size_t>(i)] =
            unscale_signal({z.at(i, 0), z.at(i, 1), z.at(i, 2), z.at(i, 3)}, scale);
    }
    return boxes;
}

DiffusedBatch corrupt_at(const std::vector<Box>& gt, const std::vector<int>& labels,
                         int n_train, PaddingStrategy strategy, double scale,
                         const Schedule& schedule, int t, Rng& rng) {
    if (t < 1 || t > schedule.T) throw std::out_of_range("corrupt_at: t out of range");
    const std::vector<Box> padded = pad_boxes(gt, n_train, strategy, rng);
    const Tensor z0 = boxes_to_signal(padded, scale);
    Tensor noise(z0.shape);
    for (auto& v : noise.data) v = draw_normal(rng);

    DiffusedBatch batch;
    batch.z_t = q_sample(schedule, z0, t, noise);
    for (auto& v : batch.z_t.data) v = std::clamp(v, -scale, scale);
    batch.t = t;
    batch.gt_boxes = gt;
    batch.gt_labels = labels;
    if (gt.size() > static_cast<std::size_t>(n_train)) {
        std::cerr << "corrupt: truncating " << gt.size() << " ground-truth boxes to n_train="
                  << n_train << "\n";
        batch.gt_boxes.resize(static_cast<std::size_t>(n_train));
        batch.gt_labels.resize(static_cast<std::size_t>(n_train));
    }
    return batch;
}

DiffusedBatch corrupt(const std::vector<Box>& gt, const std::vector<int>& labels,
                      int n_train, PaddingStrategy strategy, double scale,
                      const Schedule& schedule, Rng& rng) {
    std::uniform_int_distribution<int> t_dist(1, schedule.T);
    const int t = t_dist(rng);
    return corrupt_at(gt, labels, n_train, strategy, scale, schedule, t, rng);
}

}  // namespace boxdiff
