#include "boxdiff/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace boxdiff {

std::vector<Scene> generate(const DatasetSpec& spec) {
    if (spec.num_scenes < 0 || spec.num_classes < 1 || spec.min_objects < 0 ||
        spec.max_objects < spec.min_objects || spec.min_side <= 0.0 ||
        spec.max_side < spec.min_side || spec.max_side > 1.0) {
        throw std::invalid_argument("generate: invalid dataset spec");
    }
    Rng rng(spec.seed);
    std::uniform_int_distribution<int> count_dist(spec.min_objects, spec.max_objects);
    std::uniform_int_distribution<int> class_dist(0, spec.num_classes - 1);

    std::vector<Scene> scenes;
    scenes.reserve(static_cast<std::size_t>(spec.num_scenes));
    for (int s = 0; s < spec.num_scenes; ++s) {
        Scene scene;
        scene.image_id = s;
        scene.num_classes = spec.num_classes;
        const int wanted = count_dist(rng);
        for (int obj = 0; obj < wanted; ++obj) {
            bool placed = false;
            for (int attempt = 0; attempt < 10000 && !placed; ++attempt) {
                Box b;
                b.w = spec.min_side + draw_uniform(rng) * (spec.max_side - spec.min_side);
                b.h = spec.min_side + draw_uniform(rng) * (spec.max_side - spec.min_side);
                b.cx = b.w / 2.0 + draw_uniform(rng) * (1.0 - b.w);
                b.cy = b.h / 2.0 + draw_uniform(rng) * (1.0 - b.h);
                const CornerBox cb = to_corners(b);
                bool ok = true;
                for (const Box& other : scene.boxes) {
                    if (iou(cb, to_corners(other)) > spec.max_overlap) {
                        ok = false;
                        break;
                    }
                }
                if (ok) {
                    scene.boxes.push_back(b);
                    scene.labels.push_back(class_dist(rng));
                    placed = true;
                }
            }
            // rejection exhausted: skip this object, keep the scene
        }
        scenes.push_back(std::move(scene));
    }
    return scenes;
}

FeatureGrid rasterize(const Scene& scene, int C, int H, int W) {
    if (C != scene.num_classes + 2) {
        throw std::invalid_argument("rasterize: C must be num_classes + 2");
    }
    FeatureGrid grid;
    grid.channels = C;
    grid.height = H;
    grid.width = W;
    grid.data.assign(static_cast<std::size_t>(C) * H * W, 0.0);

    const double cell_w = 1.0 / W;
    const double cell_h = 1.0 / H;
    for (std::size_t bi = 0; bi < scene.boxes.size(); ++bi) {
        const CornerBox cb = to_corners(scene.boxes[bi]);
        const int cls = scene.labels[bi];
        const int j0 = std::max(0, static_cast<int>(std::floor(cb.x0 / cell_w)));
        const int j1 = std::min(W - 1, static_cast<int>(std::floor(cb.x1 / cell_w)));
        const int i0 = std::max(0, static_cast<int>(std::floor(cb.y0 / cell_h)));
        const int i1 = std::min(H - 1, static_cast<int>(std::floor(cb.y1 / cell_h)));
        for (int i = i0; i <= i1; ++i) {
            const double cy0 = i * cell_h, cy1 = (i + 1) * cell_h;
            const double oy = std::min(cb.y1, cy1) - std::max(cb.y0, cy0);
            if (oy <= 0.0) continue;
            for (int j = j0; j <= j1; ++j) {
                const double cx0 = j * cell_w, cx1 = (j + 1) * cell_w;
                const double ox = std::min(cb.x1, cx1) - std::max(cb.x0, cx0);
                if (ox <= 0.0) continue;
                const double frac = (ox * oy) / (cell_w * cell_h);
                double& v = grid.at(cls, i, j);
                v = std::min(1.0, v + frac);
            }
        }
    }

    for (int i = 0; i < H; ++i) {
        for (int j = 0; j < W; ++j) {
            grid.at(scene.num_classes, i, j) = (j + 0.5) / W;
            grid.at(scene.num_classes + 1, i, j) = (i + 0.5) / H;
        }
    }
    return grid;
}

void save_dataset(const std::vector<Scene>& scenes, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_dataset: cannot open " + path);
    for (const Scene& s : scenes) {
        nlohmann::json j;
        j["image_id"] = s.image_id;
        auto boxes = nlohmann::json::array();
        for (const Box& b : s.boxes) boxes.push_back({b.cx, b.cy, b.w, b.h});
        j["boxes"] = std::move(boxes);
        j["labels"] = s.labels;
        j["num_classes"] = s.num_classes;
        out << j.dump() << "\n";
    }
}

std::vector<Scene> load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_dataset: cannot open " + path);
    std::vector<Scene> scenes;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
            Scene s;
            s.image_id = j.at("image_id").get<int>();
            for (const auto& arr : j.at("boxes")) {
                if (arr.size() != 4) throw std::runtime_error("box needs 4 numbers");
                s.boxes.push_back(Box{arr[0].get<double>(), arr[1].get<double>(),
                                      arr[2].get<double>(), arr[3].get<double>()});
            }
            s.labels = j.at("labels").get<std::vector<int>>();
            s.num_classes = j.at("num_classes").get<int>();
            if (s.labels.size() != s.boxes.size()) {
                throw std::runtime_error("boxes/labels length mismatch");
            }
            scenes.push_back(std::move(s));
        } catch (const std::exception& e) {
            throw std::runtime_error("load_dataset: parse error at line " +
                                     std::to_string(line_no) + ": " + e.what());
        }
    }
    return scenes;
}

}  // namespace boxdiff
