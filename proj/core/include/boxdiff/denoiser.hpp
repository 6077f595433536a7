#pragma once

#include <string>
#include <vector>

#include "boxdiff/autodiff.hpp"
#include "boxdiff/corruption.hpp"
#include "boxdiff/geometry.hpp"
#include "boxdiff/synthdata.hpp"
#include "boxdiff/tensor.hpp"

namespace boxdiff {

struct DecoderConfig {
    int num_stages = 2;
    int hidden_dim = 128;
    int pool_size = 3;
    int num_classes = 3;
    int timestep_dim = 64;
    int feature_channels = 5;  // num_classes + 2 coordinate ramps
    int timesteps = 1000;      // schedule length the head was trained for
};

/// Prediction for a fixed set of boxes: the cleaned boxes in signal space
/// and per-class logits.
struct DecoderOutput {
    Tensor boxes;   // [N, 4] signal space
    Tensor logits;  // [N, num_classes]
};

/// One cascade stage's differentiable handles, used to attach the training
/// loss. Boxes are in normalized image space here.
struct StageTrace {
    std::vector<Box> boxes;
    Tensor logits;
    int boxes_node = -1;
    int logits_node = -1;
};

/// Bilinear RoI crop: pool_size^2 sample points at the cell centers of an
/// even subdivision of the box, all channels, flattened channel-major.
Tensor roi_pool(const FeatureGrid& features, const Box& b, int pool_size);

/// Denoising interface shared by the trained head and the oracle.
class BoxDenoiser {
public:
    virtual ~BoxDenoiser() = default;
    virtual DecoderOutput denoise(const FeatureGrid& features, const Tensor& z_t, int t) const = 0;
};

/// Cascaded RoI + MLP detection head. Each stage crops features under its
/// input boxes, runs a two-layer layernorm MLP per box, and emits a box
/// delta plus class logits. Stages are parameterized independently; the
/// whole head is reused across sampling steps.
class DetectionHead : public BoxDenoiser {
public:
    DetectionHead(DecoderConfig config, double scale, Rng& init_rng);
    DetectionHead(DecoderConfig config, double scale, ParamStore store);

    const DecoderConfig& config() const { return config_; }
    double scale() const { return scale_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }

    /// Record the full forward pass on a tape. The returned traces expose
    /// per-stage boxes/logits nodes for stage-wise supervision.
    std::vector<StageTrace> forward(Tape& tape, const FeatureGrid& features,
                                    const Tensor& z_t, int t) const;

    /// Inference-only pass; final stage re-expressed in signal space.
    DecoderOutput denoise(const FeatureGrid& features, const Tensor& z_t, int t) const override;

private:
    struct StageNodes {
        int boxes;   // [N, 4] image space, clamped
        int logits;  // [N, num_classes]
    };
    StageNodes run_stage(Tape& tape, const FeatureGrid& features, int boxes_node,
                         const Tensor& t_embed, int stage) const;

    DecoderConfig config_;
    double scale_ = 2.0;
    mutable ParamStore params_;
};

/// Test double implementing a perfect denoiser: every input box snaps to a
/// ground-truth box of the scene with saturated class logits.
class OracleDenoiser : public BoxDenoiser {
public:
    OracleDenoiser(Scene scene, double scale) : scene_(std::move(scene)), scale_(scale) {}
    DecoderOutput denoise(const FeatureGrid& features, const Tensor& z_t, int t) const override;

private:
    Scene scene_;
    double scale_;
};

std::string stage_param_name(int stage, const std::string& what);

}  // namespace boxdiff
