#include "menet/model.hpp"

#include <stdexcept>

#include "menet/metrics.hpp"

namespace menet {

Fusion fusion_from_string(const std::string& s) {
    if (s == "concat") return Fusion::Concat;
    if (s == "add") return Fusion::Add;
    if (s == "subtract") return Fusion::Subtract;
    if (s == "frame-features") return Fusion::FrameFeatures;
    throw ConfigError("unknown fusion mode: " + s);
}

std::string fusion_to_string(Fusion f) {
    switch (f) {
        case Fusion::Concat: return "concat";
        case Fusion::Add: return "add";
        case Fusion::Subtract: return "subtract";
        case Fusion::FrameFeatures: return "frame-features";
    }
    throw ConfigError("bad fusion value");
}

PipelineShapes infer_pipeline_shapes(const ModelConfig& cfg) {
    PipelineShapes s;
    s.backbone_chain = backbone_shape_chain(BackboneParams::default_layers(), cfg.image_hw);
    s.feature = s.backbone_chain.back();
    if (s.feature != Shape{cfg.feat_c, cfg.feat_hw, cfg.feat_hw})
        throw ConfigError("backbone output " + shape_str(s.feature) + " does not match configured feature geometry");
    s.pair_feature = {cfg.pair_channels(), cfg.feat_hw, cfg.feat_hw};
    s.logits = {cfg.n_classes};
    s.flow_field = {2, cfg.image_hw, cfg.image_hw};
    s.landmark_len = 2 * cfg.n_landmarks;
    s.flow_count = cfg.use_flow ? cfg.t - 1 : 0;
    s.landmark_count = cfg.use_landmark ? cfg.t - 1 : 0;
    return s;
}

Model Model::init(const ModelConfig& cfg) {
    if (cfg.t < 2) throw ConfigError("clip length must be at least 2");
    Model m;
    m.cfg = cfg;
    Rng rng(cfg.seed);
    m.backbone = BackboneParams::init(rng, m.store, "backbone", BackboneParams::default_layers(),
                                      cfg.image_hw);
    Shape feat = backbone_shape_chain(m.backbone.layers, cfg.image_hw).back();
    if (feat != Shape{cfg.feat_c, cfg.feat_hw, cfg.feat_hw})
        throw ConfigError("feature geometry mismatch: " + shape_str(feat));
    for (int b = 0; b < cfg.f5c_blocks; ++b)
        m.f5c.push_back(F5cParams::init(cfg.feat_c, cfg.feat_hw, cfg.feat_hw, rng, m.store,
                                        "f5c" + std::to_string(b)));
    m.mer = MerHeadParams::init(cfg.pair_channels(), cfg.seq_len(), cfg.feat_hw, cfg.feat_hw,
                                cfg.n_classes, rng, m.store, "mer");
    if (cfg.use_flow) m.flow = FlowHeadParams::init(cfg.feat_c, cfg.image_hw, rng, m.store, "flow");
    if (cfg.use_landmark) {
        m.landmark = LandmarkHeadParams::init(cfg.feat_c, cfg.feat_hw, cfg.n_landmarks, rng,
                                              m.store, "landmark");
        // Start predictions at the frame center so the normalized L1 term
        // begins in a well-scaled regime.
        double center = cfg.image_hw / 2.0;
        for (double& v : m.landmark.fc2_b.values()) v = center;
    }
    return m;
}

ClipOutputs forward_clip(Tape& tape, const Model& model, const std::vector<Tensor>& frames,
                         bool run_flow, bool run_landmark) {
    const ModelConfig& cfg = model.cfg;
    if (static_cast<int>(frames.size()) != cfg.t)
        throw DimensionError("expected " + std::to_string(cfg.t) + " frames, got " +
                             std::to_string(frames.size()));

    std::vector<Tensor> feats;
    feats.reserve(frames.size());
    for (const Tensor& frame : frames) {
        Tensor f = rich_feature(tape, frame, model.backbone);
        if (cfg.use_f5c)
            for (const F5cParams& block : model.f5c)
                f = f5c_forward(tape, f, block, cfg.knn, cfg.use_fcc, cfg.use_ccc);
        feats.push_back(f);
    }

    std::vector<Tensor> seq;
    if (cfg.fusion == Fusion::FrameFeatures) {
        seq = feats;
    } else {
        seq.reserve(feats.size() - 1);
        for (std::size_t k = 0; k + 1 < feats.size(); ++k) {
            switch (cfg.fusion) {
                case Fusion::Concat: seq.push_back(concat(tape, {feats[k], feats[k + 1]}, 0)); break;
                case Fusion::Add: seq.push_back(add(tape, feats[k], feats[k + 1])); break;
                case Fusion::Subtract: seq.push_back(sub(tape, feats[k], feats[k + 1])); break;
                case Fusion::FrameFeatures: break;
            }
        }
    }

    ClipOutputs out;
    out.logits = mer_head(tape, stack_time(tape, seq), model.mer);
    if (cfg.use_flow && run_flow)
        for (std::size_t k = 0; k + 1 < frames.size(); ++k)
            out.flows.push_back(
                flow_head(tape, frames[k], frames[k + 1], feats[k], feats[k + 1], model.flow));
    if (cfg.use_landmark && run_landmark)
        for (std::size_t k = 1; k < feats.size(); ++k)
            out.landmarks.push_back(landmark_head(tape, feats[k], model.landmark));
    return out;
}

LossBreakdown clip_loss(Tape& tape, const Model& model, const LoadedClip& clip,
                        const LossWeights& weights, ClipOutputs* outputs) {
    const bool run_flow = model.cfg.use_flow && weights.lambda_f != 0.0;
    const bool run_landmark = model.cfg.use_landmark && weights.lambda_m != 0.0;
    ClipOutputs out = forward_clip(tape, model, clip.frames, run_flow, run_landmark);
    LossBreakdown lb;
    Tensor l_e = ce_loss(tape, out.logits, clip.label);
    Tensor l_f, l_m;
    lb.ce = l_e.scalar();
    if (run_flow) {
        l_f = flow_loss(tape, out.flows, clip.flows);
        lb.flow = l_f.scalar();
    }
    if (run_landmark) {
        std::vector<Tensor> gt;
        std::vector<double> d_o;
        for (std::size_t k = 1; k < clip.landmarks.size(); ++k) {
            gt.push_back(Tensor::from({static_cast<int>(clip.landmarks[k].size())},
                                      clip.landmarks[k]));
            d_o.push_back(inter_ocular_distance(clip.landmarks[k]));
        }
        l_m = landmark_loss(tape, out.landmarks, gt, d_o);
        lb.landmark = l_m.scalar();
    }
    lb.total_tensor = full_loss(tape, l_e, l_f, l_m, weights);
    lb.total = lb.total_tensor.scalar();
    if (outputs) *outputs = out;
    return lb;
}

}  // namespace menet
