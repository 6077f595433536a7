#include "boxdiff/denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace boxdiff {

namespace {

// Bilinear sample of one channel at normalized (x, y); cell centers sit at
// ((j + 0.5) / W, (i + 0.5) / H) and borders clamp. Optionally reports the
// derivative w.r.t. the normalized coordinates (zero in clamped regions).
double bilinear_sample(const FeatureGrid& f, int c, double x, double y,
                       double* dv_dx = nullptr, double* dv_dy = nullptr) {
    const double gx_raw = x * f.width - 0.5;
    const double gy_raw = y * f.height - 0.5;
    const double gx = std::clamp(gx_raw, 0.0, static_cast<double>(f.width - 1));
    const double gy = std::clamp(gy_raw, 0.0, static_cast<double>(f.height - 1));
    const int j0 = std::min(static_cast<int>(gx), f.width - 1);
    const int i0 = std::min(static_cast<int>(gy), f.height - 1);
    const int j1 = std::min(j0 + 1, f.width - 1);
    const int i1 = std::min(i0 + 1, f.height - 1);
    const double fx = gx - j0;
    const double fy = gy - i0;

    const double v00 = f.at(c, i0, j0), v01 = f.at(c, i0, j1);
    const double v10 = f.at(c, i1, j0), v11 = f.at(c, i1, j1);
    const double top = v00 * (1.0 - fx) + v01 * fx;
    const double bot = v10 * (1.0 - fx) + v11 * fx;

    if (dv_dx) {
        const bool inside_x = gx_raw > 0.0 && gx_raw < static_cast<double>(f.width - 1);
        *dv_dx = inside_x
                     ? ((v01 - v00) * (1.0 - fy) + (v11 - v10) * fy) * f.width
                     : 0.0;
    }
    if (dv_dy) {
        const bool inside_y = gy_raw > 0.0 && gy_raw < static_cast<double>(f.height - 1);
        *dv_dy = inside_y ? (bot - top) * f.height : 0.0;
    }
    return top * (1.0 - fy) + bot * fy;
}

// Differentiable batched RoI crop; the only tape input is the [N, 4] box
// tensor, the feature grid is captured by value.
class RoiPoolOp final : public CustomOp {
public:
    RoiPoolOp(FeatureGrid features, int pool_size)
        : features_(std::move(features)), pool_(pool_size) {}

    Tensor forward(const Tensor& boxes) const {
        const std::int64_t n = boxes.rows();
        const std::int64_t per_box = static_cast<std::int64_t>(features_.channels) * pool_ * pool_;
        Tensor out = Tensor::matrix(n, per_box);
        for (std::int64_t r = 0; r < n; ++r) {
            const Box b{boxes.at(r, 0), boxes.at(r, 1), boxes.at(r, 2), boxes.at(r, 3)};
            const CornerBox cb = to_corners(b);
            std::int64_t idx = 0;
            for (int c = 0; c < features_.channels; ++c) {
                for (int l = 0; l < pool_; ++l) {
                    const double y = cb.y0 + (l + 0.5) * b.h / pool_;
                    for (int k = 0; k < pool_; ++k) {
                        const double x = cb.x0 + (k + 0.5) * b.w / pool_;
                        out.at(r, idx++) = bilinear_sample(features_, c, x, y);
                    }
                }
            }
        }
        return out;
    }

    void backward(const Tensor& out_grad, const std::vector<const Tensor*>& inputs,
                  const std::vector<Tensor*>& input_grads) const override {
        const Tensor& boxes = *inputs[0];
        Tensor& gbox = *input_grads[0];
        for (std::int64_t r = 0; r < boxes.rows(); ++r) {
            const Box b{boxes.at(r, 0), boxes.at(r, 1), boxes.at(r, 2), boxes.at(r, 3)};
            const CornerBox cb = to_corners(b);
            std::int64_t idx = 0;
            for (int c = 0; c < features_.channels; ++c) {
                for (int l = 0; l < pool_; ++l) {
                    const double y = cb.y0 + (l + 0.5) * b.h / pool_;
                    const double dy_dcy = 1.0;
                    const double dy_dh = -0.5 + (l + 0.5) / pool_;
                    for (int k = 0; k < pool_; ++k) {
                        const double x = cb.x0 + (k + 0.5) * b.w / pool_;
                        const double dx_dcx = 1.0;
                        const double dx_dw = -0.5 + (k + 0.5) / pool_;
                        const double g = out_grad.at(r, idx++);
                        if (g == 0.0) continue;
                        double dv_dx = 0.0, dv_dy = 0.0;
                        bilinear_sample(features_, c, x, y, &dv_dx, &dv_dy);
                        gbox.at(r, 0) += g * dv_dx * dx_dcx;
                        gbox.at(r, 1) += g * dv_dy * dy_dcy;
                        gbox.at(r, 2) += g * dv_dx * dx_dw;
                        gbox.at(r, 3) += g * dv_dy * dy_dh;
                    }
                }
            }
        }
    }

private:
    FeatureGrid features_;
    int pool_;
};

Tensor boxes_as_tensor(const std::vector<Box>& boxes) {
    Tensor t = Tensor::matrix(static_cast<std::int64_t>(boxes.size()), 4);
    for (std::size_t i = 0; i < boxes.size(); ++i) {
        t.at(static_cast<std::int64_t>(i), 0) = boxes[i].cx;
        t.at(static_cast<std::int64_t>(i), 1) = boxes[i].cy;
        t.at(static_cast<std::int64_t>(i), 2) = boxes[i].w;
        t.at(static_cast<std::int64_t>(i), 3) = boxes[i].h;
    }
    return t;
}

std::vector<Box> tensor_as_boxes(const Tensor& t) {
    std::vector<Box> boxes(static_cast<std::size_t>(t.rows()));
    for (std::int64_t i = 0; i < t.rows(); ++i) {
        boxes[static_cast<std::size_t>(i)] = Box{t.at(i, 0), t.at(i, 1), t.at(i, 2), t.at(i, 3)};
    }
    return boxes;
}

}  // namespace

Tensor roi_pool(const FeatureGrid& features, const Box& b, int pool_size) {
    if (pool_size < 1) throw std::invalid_argument("roi_pool: pool_size must be >= 1");
    RoiPoolOp op(features, pool_size);
    Tensor boxes = boxes_as_tensor({clamp_box(b)});
    Tensor batched = op.forward(boxes);
    batched.shape = {batched.cols()};
    return batched;
}

std::string stage_param_name(int stage, const std::string& what) {
    return "stage" + std::to_string(stage) + "." + what;
}

DetectionHead::DetectionHead(DecoderConfig config, double scale, Rng& init_rng)
    : config_(config), scale_(scale) {
    if (config_.num_stages < 1 || config_.hidden_dim < 1 || config_.pool_size < 1 ||
        config_.num_classes < 1 || config_.timestep_dim < 2 || config_.feature_channels < 1) {
        throw std::invalid_argument("DetectionHead: invalid config");
    }
    const std::int64_t in_dim =
        static_cast<std::int64_t>(config_.feature_channels) * config_.pool_size *
            config_.pool_size + 4 + config_.timestep_dim;
    const std::int64_t hid = config_.hidden_dim;
    for (int s = 0; s < config_.num_stages; ++s) {
        params_.add(stage_param_name(s, "fc1.w"), xavier_init(in_dim, hid, init_rng));
        params_.add(stage_param_name(s, "fc1.b"), Tensor({hid}, 0.0));
        params_.add(stage_param_name(s, "ln1.g"), Tensor({hid}, 1.0));
        params_.add(stage_param_name(s, "ln1.b"), Tensor({hid}, 0.0));
        params_.add(stage_param_name(s, "fc2.w"), xavier_init(hid, hid, init_rng));
        params_.add(stage_param_name(s, "fc2.b"), Tensor({hid}, 0.0));
        params_.add(stage_param_name(s, "ln2.g"), Tensor({hid}, 1.0));
        params_.add(stage_param_name(s, "ln2.b"), Tensor({hid}, 0.0));
        // Zero-initialized heads make stage 0 the identity on boxes.
        params_.add(stage_param_name(s, "box.w"), Tensor::matrix(hid, 4, 0.0));
        params_.add(stage_param_name(s, "box.b"), Tensor({4}, 0.0));
        params_.add(stage_param_name(s, "cls.w"),
                    Tensor::matrix(hid, config_.num_classes, 0.0));
        params_.add(stage_param_name(s, "cls.b"), Tensor({static_cast<std::int64_t>(config_.num_classes)}, 0.0));
    }
}

DetectionHead::DetectionHead(DecoderConfig config, double scale, ParamStore store)
    : config_(config), scale_(scale), params_(std::move(store)) {}

DetectionHead::StageNodes DetectionHead::run_stage(Tape& tape, const FeatureGrid& features,
                                                   int boxes_node, const Tensor& t_embed,
                                                   int stage) const {
    const Tensor& boxes_value = tape.value(boxes_node);
    const std::int64_t n = boxes_value.rows();

    auto op = std::make_shared<RoiPoolOp>(features, config_.pool_size);
    Tensor roi_values = op->forward(boxes_value);
    const int roi = tape.custom(op, {boxes_node}, std::move(roi_values));

    Tensor embed_rows = Tensor::matrix(n, config_.timestep_dim);
    for (std::int64_t i = 0; i < n; ++i) {
        for (int j = 0; j < config_.timestep_dim; ++j) {
            embed_rows.at(i, j) = t_embed.data[static_cast<std::size_t>(j)];
        }
    }
    const int embed = tape.input(std::move(embed_rows));

    const int x = tape.concat_cols({roi, boxes_node, embed});

    const int h1 = tape.gelu(tape.layernorm(
        tape.add_bias(tape.matmul(x, tape.param(params_, stage_param_name(stage, "fc1.w"))),
                      tape.param(params_, stage_param_name(stage, "fc1.b"))),
        tape.param(params_, stage_param_name(stage, "ln1.g")),
        tape.param(params_, stage_param_name(stage, "ln1.b"))));
    const int h2 = tape.gelu(tape.layernorm(
        tape.add_bias(tape.matmul(h1, tape.param(params_, stage_param_name(stage, "fc2.w"))),
                      tape.param(params_, stage_param_name(stage, "fc2.b"))),
        tape.param(params_, stage_param_name(stage, "ln2.g")),
        tape.param(params_, stage_param_name(stage, "ln2.b"))));

    const int delta =
        tape.add_bias(tape.matmul(h2, tape.param(params_, stage_param_name(stage, "box.w"))),
                      tape.param(params_, stage_param_name(stage, "box.b")));
    const int boxes_out = tape.clamp_cols(tape.add(boxes_node, delta),
                                          {0.0, 0.0, kMinBoxSide, kMinBoxSide},
                                          {1.0, 1.0, 1.0, 1.0});
    const int logits =
        tape.add_bias(tape.matmul(h2, tape.param(params_, stage_param_name(stage, "cls.w"))),
                      tape.param(params_, stage_param_name(stage, "cls.b")));
    return {boxes_out, logits};
}

std::vector<StageTrace> DetectionHead::forward(Tape& tape, const FeatureGrid& features,
                                               const Tensor& z_t, int t) const {
    if (z_t.shape.size() != 2 || z_t.cols() != 4) {
        throw std::invalid_argument("DetectionHead::forward: z_t must be [N, 4]");
    }
    if (features.channels != config_.feature_channels) {
        throw std::invalid_argument("DetectionHead::forward: feature channel mismatch");
    }
    const Tensor t_embed = timestep_embedding(t, config_.timestep_dim, config_.timesteps);

    int boxes_node = tape.input(boxes_as_tensor(signal_to_boxes(z_t, scale_)));
    std::vector<StageTrace> traces;
    traces.reserve(static_cast<std::size_t>(config_.num_stages));
    for (int s = 0; s < config_.num_stages; ++s) {
        const StageNodes nodes = run_stage(tape, features, boxes_node, t_embed, s);
        StageTrace trace;
        trace.boxes = tensor_as_boxes(tape.value(nodes.boxes));
        trace.logits = tape.value(nodes.logits);
        trace.boxes_node = nodes.boxes;
        trace.logits_node = nodes.logits;
        traces.push_back(std::move(trace));
        boxes_node = nodes.boxes;
    }
    return traces;
}

DecoderOutput DetectionHead::denoise(const FeatureGrid& features, const Tensor& z_t,
                                     int t) const {
    Tape tape;
    const std::vector<StageTrace> traces = forward(tape, features, z_t, t);
    const StageTrace& last = traces.back();
    DecoderOutput out;
    out.boxes = boxes_to_signal(last.boxes, scale_);
    out.logits = last.logits;
    return out;
}

DecoderOutput OracleDenoiser::denoise(const FeatureGrid& /*features*/, const Tensor& z_t,
                                      int /*t*/) const {
    const std::int64_t n = z_t.rows();
    const auto n_gt = static_cast<std::int64_t>(scene_.boxes.size());
    DecoderOutput out;
    out.logits = Tensor::matrix(n, scene_.num_classes, -12.0);
    if (n_gt == 0) {
        out.boxes = z_t;
        return out;
    }

    out.boxes = Tensor::matrix(n, 4);
    const std::vector<Box> noisy = signal_to_boxes(z_t, scale_);
    for (std::int64_t i = 0; i < n; ++i) {
        std::int64_t target;
        if (n >= n_gt) {
            // Cycling guarantees every ground truth is produced.
            target = i % n_gt;
        } else {
            target = 0;
            double best = std::numeric_limits<double>::infinity();
            for (std::int64_t j = 0; j < n_gt; ++j) {
                const Box& g = scene_.boxes[static_cast<std::size_t>(j)];
                const Box& b = noisy[static_cast<std::size_t>(i)];
                const double d = (g.cx - b.cx) * (g.cx - b.cx) + (g.cy - b.cy) * (g.cy - b.cy);
                if (d < best) {
                    best = d;
                    target = j;
                }
            }
        }
        const auto st = static_cast<std::size_t>(target);
        const auto sig = scale_signal(scene_.boxes[st], scale_);
        for (int k = 0; k < 4; ++k) out.boxes.at(i, k) = sig[static_cast<std::size_t>(k)];
        out.logits.at(i, scene_.labels[st]) = 12.0;
    }
    return out;
}

}  // namespace boxdiff
