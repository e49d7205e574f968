#pragma once

#include "menet/gradcheck.hpp"
#include "menet/ops.hpp"
#include "menet/params.hpp"

namespace menet {

// 3D-CNN classifier over the stacked pair-feature sequence:
// conv3d → ReLU → maxpool3d → flatten → FC → ReLU → FC → logits.
struct MerHeadParams {
    int c_in = 0, t_seq = 0, h = 0, w = 0, n_classes = 0;
    std::array<int, 3> pool{};  // min(2, dim) per axis so t=2 clips stay valid
    Tensor ln_g, ln_b;  // input normalization
    Tensor conv_w, conv_b;
    Tensor fc1_w, fc1_b;
    Tensor fc2_w, fc2_b;

    static MerHeadParams init(int c_in, int t_seq, int h, int w, int n_classes, Rng& rng,
                              ParamStore& store, const std::string& prefix,
                              int conv_channels = 64, int fc_hidden = 256);
};

Tensor mer_head(Tape& tape, const Tensor& seq, const MerHeadParams& p);

// FlowNet-style encoder/decoder. The encoder ingests both frames and
// produces features at 1/2, 1/4 and 1/8 resolution; the 1/8 level is fused
// with the two F5C features, and the decoder upsamples back to full
// resolution with skip connections from the matching encoder levels.
struct FlowHeadParams {
    int feat_c = 0, image_hw = 0;
    std::array<int, 3> enc_ch{16, 32, 64};
    Tensor enc1_w, enc1_b, enc2_w, enc2_b, enc3_w, enc3_b;
    Tensor fuse_w, fuse_b;
    Tensor up1_w, up1_b, mix1_w, mix1_b;
    Tensor up2_w, up2_b, mix2_w, mix2_b;
    Tensor up3_w, up3_b;
    Tensor out_w, out_b;

    static FlowHeadParams init(int feat_c, int image_hw, Rng& rng, ParamStore& store,
                               const std::string& prefix);
};

Tensor flow_head(Tape& tape, const Tensor& frame_a, const Tensor& frame_b, const Tensor& feat_a,
                 const Tensor& feat_b, const FlowHeadParams& p);

// conv2d 3×3 stride 2 → ReLU → flatten → FC → ReLU → FC → 2m coordinates.
struct LandmarkHeadParams {
    int feat_c = 0, feat_hw = 0, n_landmarks = 0;
    Tensor ln_g, ln_b;  // input normalization
    Tensor conv_w, conv_b;
    Tensor fc1_w, fc1_b;
    Tensor fc2_w, fc2_b;

    static LandmarkHeadParams init(int feat_c, int feat_hw, int n_landmarks, Rng& rng,
                                   ParamStore& store, const std::string& prefix,
                                   int conv_channels = 32, int fc_hidden = 256);
};

Tensor landmark_head(Tape& tape, const Tensor& feat, const LandmarkHeadParams& p);

}  // namespace menet
