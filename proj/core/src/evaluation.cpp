#include "boxdiff/evaluation.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include <json.hpp>

namespace boxdiff {

namespace {

struct FlatDetection {
    int image = 0;
    Box box;
    double score = 0.0;
};

/// Greedy matching stats for one class at one threshold.
struct ClassCurve {
    std::vector<bool> tp;  // per detection, in canonical order
    int num_gt = 0;
};

ClassCurve match_class(const std::vector<Detections>& detections,
                       const std::vector<Scene>& ground_truth, int cls,
                       double iou_threshold) {
    ClassCurve curve;
    std::vector<FlatDetection> flat;
    for (std::size_t img = 0; img < detections.size(); ++img) {
        const Detections& d = detections[img];
        for (std::size_t i = 0; i < d.size(); ++i) {
            if (d.labels[i] != cls) continue;
            flat.push_back({static_cast<int>(img), d.boxes[i], d.scores[i]});
        }
    }
    std::sort(flat.begin(), flat.end(), [](const FlatDetection& a, const FlatDetection& b) {
        if (a.score != b.score) return a.score > b.score;
        return std::tie(a.image, a.box.cx, a.box.cy, a.box.w, a.box.h) <
               std::tie(b.image, b.box.cx, b.box.cy, b.box.w, b.box.h);
    });

    std::vector<std::vector<bool>> gt_used(ground_truth.size());
    for (std::size_t img = 0; img < ground_truth.size(); ++img) {
        gt_used[img].assign(ground_truth[img].boxes.size(), false);
        for (int label : ground_truth[img].labels) {
            if (label == cls) ++curve.num_gt;
        }
    }

    curve.tp.reserve(flat.size());
    for (const FlatDetection& det : flat) {
        const Scene& scene = ground_truth[static_cast<std::size_t>(det.image)];
        const CornerBox db = to_corners(det.box);
        double best_iou = -1.0;
        int best_j = -1;
        for (std::size_t j = 0; j < scene.boxes.size(); ++j) {
            if (scene.labels[j] != cls || gt_used[static_cast<std::size_t>(det.image)][j]) continue;
            const double v = iou(db, to_corners(scene.boxes[j]));
            if (v > best_iou) {
                best_iou = v;
                best_j = static_cast<int>(j);
            }
        }
        if (best_j >= 0 && best_iou >= iou_threshold) {
            gt_used[static_cast<std::size_t>(det.image)][static_cast<std::size_t>(best_j)] = true;
            curve.tp.push_back(true);
        } else {
            curve.tp.push_back(false);
        }
    }
    return curve;
}

/// All-point interpolated area under the precision-recall curve.
double curve_ap(const ClassCurve& curve) {
    if (curve.num_gt == 0) return -1.0;  // undefined, excluded from means
    const std::size_t n = curve.tp.size();
    if (n == 0) return 0.0;
    std::vector<double> precision(n), recall(n);
    int tp = 0;
    for (std::size_t k = 0; k < n; ++k) {
        if (curve.tp[k]) ++tp;
        precision[k] = static_cast<double>(tp) / static_cast<double>(k + 1);
        recall[k] = static_cast<double>(tp) / curve.num_gt;
    }
    // precision envelope: max precision at any recall >= r
    std::vector<double> envelope(n);
    double running = 0.0;
    for (std::size_t k = n; k-- > 0;) {
        running = std::max(running, precision[k]);
        envelope[k] = running;
    }
    double ap = 0.0;
    double prev_recall = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        if (recall[k] > prev_recall) {
            ap += (recall[k] - prev_recall) * envelope[k];
            prev_recall = recall[k];
        }
    }
    return ap;
}

int max_class(const std::vector<Scene>& ground_truth) {
    int m = -1;
    for (const Scene& s : ground_truth) {
        m = std::max(m, s.num_classes - 1);
        for (int label : s.labels) m = std::max(m, label);
    }
    return m;
}

}  // namespace

double average_precision(const std::vector<Detections>& detections,
                         const std::vector<Scene>& ground_truth, double iou_threshold) {
    if (detections.size() != ground_truth.size()) {
        throw std::invalid_argument("average_precision: detections/scenes length mismatch");
    }
    const int classes = max_class(ground_truth) + 1;
    double sum = 0.0;
    int counted = 0;
    for (int cls = 0; cls < classes; ++cls) {
        const double ap = curve_ap(match_class(detections, ground_truth, cls, iou_threshold));
        if (ap >= 0.0) {
            sum += ap;
            ++counted;
        }
    }
    return counted > 0 ? sum / counted : 0.0;
}

EvalResult compute_metrics(const std::vector<Detections>& detections,
                           const std::vector<Scene>& ground_truth) {
    EvalResult r;
    r.num_scenes = static_cast<int>(ground_truth.size());
    const int classes = max_class(ground_truth) + 1;
    r.per_class.assign(static_cast<std::size_t>(std::max(classes, 0)), 0.0);

    std::vector<double> thresholds;
    for (int i = 0; i < 10; ++i) thresholds.push_back(0.5 + 0.05 * i);

    std::vector<int> counted_per_class(static_cast<std::size_t>(std::max(classes, 0)), 0);
    double ap_sum = 0.0;
    for (double thr : thresholds) {
        double class_sum = 0.0;
        int counted = 0;
        for (int cls = 0; cls < classes; ++cls) {
            const ClassCurve curve = match_class(detections, ground_truth, cls, thr);
            const double ap = curve_ap(curve);
            if (ap >= 0.0) {
                class_sum += ap;
                ++counted;
                r.per_class[static_cast<std::size_t>(cls)] += ap;
                ++counted_per_class[static_cast<std::size_t>(cls)];
            }
        }
        const double mean_ap = counted > 0 ? class_sum / counted : 0.0;
        ap_sum += mean_ap;
        if (thr == 0.5) r.ap50 = mean_ap;
        if (std::abs(thr - 0.75) < 1e-12) r.ap75 = mean_ap;
    }
    r.ap = ap_sum / static_cast<double>(thresholds.size());
    for (std::size_t c = 0; c < r.per_class.size(); ++c) {
        if (counted_per_class[c] > 0) r.per_class[c] /= counted_per_class[c];
    }

    // micro recall at IoU 0.5
    int matched = 0, total_gt = 0;
    for (int cls = 0; cls < classes; ++cls) {
        const ClassCurve curve = match_class(detections, ground_truth, cls, 0.5);
        total_gt += curve.num_gt;
        for (bool tp : curve.tp) {
            if (tp) ++matched;
        }
    }
    r.recall = total_gt > 0 ? static_cast<double>(matched) / total_gt : 0.0;
    return r;
}

namespace {

Rng scene_rng(std::uint64_t seed, int image_id) {
    std::seed_seq seq{static_cast<std::uint64_t>(image_id), seed};
    return Rng(seq);
}

}  // namespace

EvalResult evaluate(const BoxDenoiser& decoder, const std::vector<Scene>& dataset,
                    const Schedule& schedule, const SamplerConfig& config, int grid,
                    std::uint64_t seed) {
    std::vector<Detections> detections;
    detections.reserve(dataset.size());
    for (const Scene& scene : dataset) {
        const FeatureGrid features = rasterize(scene, scene.num_classes + 2, grid, grid);
        Rng rng = scene_rng(seed, scene.image_id);
        detections.push_back(sample(features, decoder, schedule, config, rng));
    }
    return compute_metrics(detections, dataset);
}

EvalResult evaluate_oracle(const std::vector<Scene>& dataset, const Schedule& schedule,
                           const SamplerConfig& config, int grid, std::uint64_t seed) {
    std::vector<Detections> detections;
    detections.reserve(dataset.size());
    for (const Scene& scene : dataset) {
        const FeatureGrid features = rasterize(scene, scene.num_classes + 2, grid, grid);
        const OracleDenoiser oracle(scene, config.scale);
        Rng rng = scene_rng(seed, scene.image_id);
        detections.push_back(sample(features, oracle, schedule, config, rng));
    }
    return compute_metrics(detections, dataset);
}

AblationTable ablate_sampling(const BoxDenoiser& decoder, const std::vector<Scene>& dataset,
                              const Schedule& schedule, const SamplerConfig& base, int grid,
                              const std::vector<int>& steps_list, std::uint64_t seed) {
    AblationTable table;
    table.axis = "sampling";
    const std::array<std::pair<bool, bool>, 4> combos{{
        {false, false}, {true, false}, {false, true}, {true, true}}};
    const std::array<const char*, 4> names{
        "plain", "ddim", "renewal", "ddim+renewal"};
    for (int s : steps_list) table.col_labels.push_back(std::to_string(s) + " steps");
    for (std::size_t row = 0; row < combos.size(); ++row) {
        table.row_labels.emplace_back(names[row]);
        std::vector<EvalResult> cells;
        for (int s : steps_list) {
            SamplerConfig config = base;
            config.use_ddim = combos[row].first;
            config.use_renewal = combos[row].second;
            config.steps = s;
            cells.push_back(evaluate(decoder, dataset, schedule, config, grid, seed));
        }
        table.cells.push_back(std::move(cells));
    }
    return table;
}

AblationTable ablate_checkpoints(const std::string& axis,
                                 const std::vector<std::pair<std::string, const BoxDenoiser*>>& rows,
                                 const std::vector<Scene>& dataset, const Schedule& schedule,
                                 const SamplerConfig& base, int grid, std::uint64_t seed) {
    AblationTable table;
    table.axis = axis;
    table.col_labels = {"result"};
    for (const auto& [label, decoder] : rows) {
        table.row_labels.push_back(label);
        table.cells.push_back({evaluate(*decoder, dataset, schedule, base, grid, seed)});
    }
    return table;
}

AblationTable ablate_nbox(const std::vector<std::pair<std::string, const BoxDenoiser*>>& rows,
                          const std::vector<Scene>& dataset, const Schedule& schedule,
                          const SamplerConfig& base, int grid,
                          const std::vector<int>& n_eval_list, std::uint64_t seed) {
    AblationTable table;
    table.axis = "nbox";
    for (int n : n_eval_list) table.col_labels.push_back("n_eval=" + std::to_string(n));
    for (const auto& [label, decoder] : rows) {
        table.row_labels.push_back(label);
        std::vector<EvalResult> cells;
        for (int n : n_eval_list) {
            SamplerConfig config = base;
            config.n_eval = n;
            cells.push_back(evaluate(*decoder, dataset, schedule, config, grid, seed));
        }
        table.cells.push_back(std::move(cells));
    }
    return table;
}

namespace {

nlohmann::json result_json(const EvalResult& r) {
    nlohmann::json j;
    j["ap"] = r.ap;
    j["ap50"] = r.ap50;
    j["ap75"] = r.ap75;
    j["recall"] = r.recall;
    j["per_class"] = r.per_class;
    j["num_scenes"] = r.num_scenes;
    return j;
}

}  // namespace

std::string eval_result_to_json(const EvalResult& r) { return result_json(r).dump(2); }

std::string table_to_json(const AblationTable& t) {
    nlohmann::json j;
    j["axis"] = t.axis;
    j["rows"] = t.row_labels;
    j["cols"] = t.col_labels;
    auto cells = nlohmann::json::array();
    for (const auto& row : t.cells) {
        auto jrow = nlohmann::json::array();
        for (const auto& cell : row) jrow.push_back(result_json(cell));
        cells.push_back(std::move(jrow));
    }
    j["cells"] = std::move(cells);
    return j.dump(2);
}

std::string table_to_text(const AblationTable& t) {
    std::size_t label_width = 4;
    for (const auto& l : t.row_labels) label_width = std::max(label_width, l.size());
    std::ostringstream out;
    out << std::left << std::setw(static_cast<int>(label_width) + 2) << t.axis;
    for (const auto& c : t.col_labels) out << std::right << std::setw(12) << c;
    out << "\n";
    for (std::size_t r = 0; r < t.cells.size(); ++r) {
        out << std::left << std::setw(static_cast<int>(label_width) + 2) << t.row_labels[r];
        for (const auto& cell : t.cells[r]) {
            out << std::right << std::setw(12) << std::fixed << std::setprecision(4) << cell.ap50;
        }
        out << "\n";
    }
    return out.str();
}

}  // namespace boxdiff
