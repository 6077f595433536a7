#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "boxdiff/sampler.hpp"
#include "boxdiff/synthdata.hpp"

namespace boxdiff {

struct EvalResult {
    double ap = 0.0;    // mean over IoU thresholds 0.50:0.05:0.95
    double ap50 = 0.0;
    double ap75 = 0.0;
    double recall = 0.0;  // matched ground-truth fraction at IoU 0.5
    std::vector<double> per_class;  // AP per class, averaged over thresholds
    int num_scenes = 0;
};

/// Class-mean average precision at one IoU threshold. Detections are sorted
/// canonically (score desc, then image id and coordinates) so the result is
/// a function of the detection set, then greedily matched to unmatched
/// ground truth; the precision-recall curve integrates with all-point
/// interpolation. Classes without any ground truth are excluded.
double average_precision(const std::vector<Detections>& detections,
                         const std::vector<Scene>& ground_truth, double iou_threshold);

/// Full metric bundle from already-computed per-scene detections.
EvalResult compute_metrics(const std::vector<Detections>& detections,
                           const std::vector<Scene>& ground_truth);

/// Sample every scene with the given decoder and aggregate metrics. Scenes
/// get independent rng streams derived from the seed, so the result does
/// not depend on evaluation order.
EvalResult evaluate(const BoxDenoiser& decoder, const std::vector<Scene>& dataset,
                    const Schedule& schedule, const SamplerConfig& config, int grid,
                    std::uint64_t seed);

/// Same but with the per-scene oracle denoiser (reads ground truth; test
/// and harness use only).
EvalResult evaluate_oracle(const std::vector<Scene>& dataset, const Schedule& schedule,
                           const SamplerConfig& config, int grid, std::uint64_t seed);

struct AblationTable {
    std::string axis;
    std::vector<std::string> row_labels;
    std::vector<std::string> col_labels;
    std::vector<std::vector<EvalResult>> cells;  // [row][col]
};

/// Sampling-strategy grid from a single decoder: rows are the four
/// {DDIM} x {renewal} combinations, columns the step counts.
AblationTable ablate_sampling(const BoxDenoiser& decoder, const std::vector<Scene>& dataset,
                              const Schedule& schedule, const SamplerConfig& base, int grid,
                              const std::vector<int>& steps_list, std::uint64_t seed);

/// Same grid with the per-scene oracle denoiser.
AblationTable ablate_sampling_oracle(const std::vector<Scene>& dataset, const Schedule& schedule,
                                     const SamplerConfig& base, int grid,
                                     const std::vector<int>& steps_list, std::uint64_t seed);

/// One row per labeled decoder (e.g. per signal scale or padding strategy
/// checkpoint), evaluated under the base config.
AblationTable ablate_checkpoints(const std::string& axis,
                                 const std::vector<std::pair<std::string, const BoxDenoiser*>>& rows,
                                 const std::vector<Scene>& dataset, const Schedule& schedule,
                                 const SamplerConfig& base, int grid, std::uint64_t seed);

/// Training-vs-evaluation box count matrix: one row per trained decoder,
/// one column per N_eval.
AblationTable ablate_nbox(const std::vector<std::pair<std::string, const BoxDenoiser*>>& rows,
                          const std::vector<Scene>& dataset, const Schedule& schedule,
                          const SamplerConfig& base, int grid,
                          const std::vector<int>& n_eval_list, std::uint64_t seed);

std::string eval_result_to_json(const EvalResult& r);
std::string table_to_json(const AblationTable& t);
/// Fixed-width text rendering; cells show AP@0.5.
std::string table_to_text(const AblationTable& t);

}  // namespace boxdiff
