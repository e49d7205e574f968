#pragma once

#include "menet/backbone.hpp"
#include "menet/data.hpp"
#include "menet/f5c.hpp"
#include "menet/heads.hpp"
#include "menet/losses.hpp"

namespace menet {

// How consecutive-frame features are fused for the classifier input.
enum class Fusion { Concat, Add, Subtract, FrameFeatures };

Fusion fusion_from_string(const std::string& s);
std::string fusion_to_string(Fusion f);

struct ModelConfig {
    int n_classes = 5;
    int t = 8;
    int n_landmarks = 68;
    int image_hw = 128;
    int feat_c = 128, feat_hw = 16;
    int knn = 4;
    int f5c_blocks = 1;
    bool use_f5c = true;   // false: features bypass FCC and CCC entirely
    bool use_fcc = true;   // false: F5C keeps only the CCC residual
    bool use_ccc = true;   // false: F5C keeps only the FCC residual
    bool use_flow = true;      // optical-flow estimation head
    bool use_landmark = true;  // landmark detection head
    Fusion fusion = Fusion::Concat;
    std::uint64_t seed = 1;

    int seq_len() const { return fusion == Fusion::FrameFeatures ? t : t - 1; }
    int pair_channels() const { return fusion == Fusion::Concat ? 2 * feat_c : feat_c; }
};

// Shapes implied by a configuration, computed without running the network.
struct PipelineShapes {
    std::vector<Shape> backbone_chain;
    Shape feature;       // per-frame F5C output
    Shape pair_feature;  // classifier sequence element
    Shape logits;
    Shape flow_field;
    int landmark_len = 0;
    int flow_count = 0, landmark_count = 0;
};

PipelineShapes infer_pipeline_shapes(const ModelConfig& cfg);

struct Model {
    ModelConfig cfg;
    ParamStore store;
    BackboneParams backbone;
    std::vector<F5cParams> f5c;
    MerHeadParams mer;
    FlowHeadParams flow;
    LandmarkHeadParams landmark;

    static Model init(const ModelConfig& cfg);
};

struct ClipOutputs {
    Tensor logits;
    std::vector<Tensor> flows;      // empty when the flow head is disabled
    std::vector<Tensor> landmarks;  // empty when the landmark head is disabled
};

// `run_flow` / `run_landmark` can drop an enabled head's forward pass for
// callers that will not consume it (e.g. training with a zero loss weight).
ClipOutputs forward_clip(Tape& tape, const Model& model, const std::vector<Tensor>& frames,
                         bool run_flow = true, bool run_landmark = true);

struct LossBreakdown {
    double ce = 0, flow = 0, landmark = 0, total = 0;
    Tensor total_tensor;
};

// Forward plus the weighted joint loss against the clip's ground truth.
LossBreakdown clip_loss(Tape& tape, const Model& model, const LoadedClip& clip,
                        const LossWeights& weights, ClipOutputs* outputs = nullptr);

}  // namespace menet
