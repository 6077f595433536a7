#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "boxdiff/autodiff.hpp"
#include "boxdiff/geometry.hpp"
#include "boxdiff/tensor.hpp"

namespace boxdiff {

/// Conditioning representation consumed by the detection head in place of a
/// learned image encoder: per-class coverage channels plus coordinate ramps.
struct FeatureGrid {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<double> data;  // channel-major [C][H][W]

    double at(int c, int i, int j) const {
        return data[static_cast<std::size_t>((c * height + i) * width + j)];
    }
    double& at(int c, int i, int j) {
        return data[static_cast<std::size_t>((c * height + i) * width + j)];
    }
};

/// One synthetic scene: labeled axis-aligned rectangles in normalized
/// coordinates.
struct Scene {
    int image_id = 0;
    std::vector<Box> boxes;
    std::vector<int> labels;
    int num_classes = 0;
};

struct DatasetSpec {
    int num_scenes = 0;
    int num_classes = 3;
    int min_objects = 1;
    int max_objects = 5;
    double min_side = 0.08;
    double max_side = 0.45;
    double max_overlap = 0.3;
    int grid = 16;  // feature grid H = W
    std::uint64_t seed = 0;
};

/// Rejection-sampled scenes obeying the pairwise-overlap and size
/// constraints; bit-deterministic for a given spec.
std::vector<Scene> generate(const DatasetSpec& spec);

/// Rasterize a scene onto a C x H x W grid. Channel k < num_classes holds
/// the fraction of each cell covered by class-k boxes (clamped to 1); the
/// final two channels are the normalized cell-center x and y ramps.
/// Requires C == num_classes + 2.
FeatureGrid rasterize(const Scene& scene, int C, int H, int W);

/// JSON Lines, one scene per line.
void save_dataset(const std::vector<Scene>& scenes, const std::string& path);
std::vector<Scene> load_dataset(const std::string& path);

}  // namespace boxdiff
