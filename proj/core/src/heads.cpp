#include "menet/heads.hpp"

#include <algorithm>
#include <tuple>

namespace menet {

MerHeadParams MerHeadParams::init(int c_in, int t_seq, int h, int w, int n_classes, Rng& rng,
                                  ParamStore& store, const std::string& prefix, int conv_channels,
                                  int fc_hidden) {
    if (t_seq < 1) throw ConfigError("mer_head: empty sequence");
    MerHeadParams p;
    p.c_in = c_in;
    p.t_seq = t_seq;
    p.h = h;
    p.w = w;
    p.n_classes = n_classes;
    p.pool = {std::min(2, t_seq), std::min(2, h), std::min(2, w)};
    p.ln_g = store.add(prefix + ".ln.g", Tensor::full({1}, 1.0));
    p.ln_b = store.add(prefix + ".ln.b", Tensor::zeros({1}));
    const int fan_conv = c_in * 27;
    p.conv_w = store.add(prefix + ".conv.w",
                         fan_in_uniform({conv_channels, c_in, 3, 3, 3}, fan_conv, rng));
    p.conv_b = store.add(prefix + ".conv.b", Tensor::zeros({conv_channels}));
    const Shape pooled = maxpool3d_out_shape({conv_channels, t_seq, h, w}, p.pool, p.pool);
    const int flat = static_cast<int>(numel(pooled));
    p.fc1_w = store.add(prefix + ".fc1.w", fan_in_uniform({fc_hidden, flat}, flat, rng));
    p.fc1_b = store.add(prefix + ".fc1.b", Tensor::zeros({fc_hidden}));
    p.fc2_w = store.add(prefix + ".fc2.w", fan_in_uniform({n_classes, fc_hidden}, fc_hidden, rng));
    p.fc2_b = store.add(prefix + ".fc2.b", Tensor::zeros({n_classes}));
    return p;
}

Tensor mer_head(Tape& tape, const Tensor& seq, const MerHeadParams& p) {
    if (seq.rank() != 4 || seq.dim(0) != p.c_in || seq.dim(1) != p.t_seq)
        throw DimensionError("mer_head: sequence " + shape_str(seq.shape()) + " does not match params");
    Tensor x = layer_norm(tape, seq, p.ln_g, p.ln_b);
    x = conv3d(tape, x, p.conv_w, p.conv_b, {1, 1, 1}, {1, 1, 1});
    x = relu(tape, x);
    x = maxpool3d(tape, x, p.pool, p.pool);
    x = reshape(tape, x, {static_cast<int>(x.size())});
    x = relu(tape, fully_connected(tape, x, p.fc1_w, p.fc1_b));
    return fully_connected(tape, x, p.fc2_w, p.fc2_b);
}

FlowHeadParams FlowHeadParams::init(int feat_c, int image_hw, Rng& rng, ParamStore& store,
                                    const std::string& prefix) {
    if (image_hw % 8 != 0) throw ConfigError("flow_head: image size must be divisible by 8");
    FlowHeadParams p;
    p.feat_c = feat_c;
    p.image_hw = image_hw;
    const auto [c1, c2, c3] = std::tuple{p.enc_ch[0], p.enc_ch[1], p.enc_ch[2]};
    auto conv = [&](const std::string& name, int co, int ci, int k) {
        Tensor w = store.add(prefix + "." + name + ".w", fan_in_uniform({co, ci, k, k}, ci * k * k, rng));
        Tensor b = store.add(prefix + "." + name + ".b", Tensor::zeros({co}));
        return std::pair{w, b};
    };
    std::tie(p.enc1_w, p.enc1_b) = conv("enc1", c1, 2, 3);
    std::tie(p.enc2_w, p.enc2_b) = conv("enc2", c2, c1, 3);
    std::tie(p.enc3_w, p.enc3_b) = conv("enc3", c3, c2, 3);
    std::tie(p.fuse_w, p.fuse_b) = conv("fuse", c3, c3 + 2 * feat_c, 1);
    // transpose-conv weights use the [C_in, C_out, kh, kw] layout
    p.up1_w = store.add(prefix + ".up1.w", fan_in_uniform({c3, c2, 4, 4}, c3 * 16, rng));
    p.up1_b = store.add(prefix + ".up1.b", Tensor::zeros({c2}));
    std::tie(p.mix1_w, p.mix1_b) = conv("mix1", c2, 2 * c2, 1);
    p.up2_w = store.add(prefix + ".up2.w", fan_in_uniform({c2, c1, 4, 4}, c2 * 16, rng));
    p.up2_b = store.add(prefix + ".up2.b", Tensor::zeros({c1}));
    std::tie(p.mix2_w, p.mix2_b) = conv("mix2", c1, 2 * c1, 1);
    p.up3_w = store.add(prefix + ".up3.w", fan_in_uniform({c1, 8, 4, 4}, c1 * 16, rng));
    p.up3_b = store.add(prefix + ".up3.b", Tensor::zeros({8}));
    std::tie(p.out_w, p.out_b) = conv("out", 2, 8, 3);
    return p;
}

Tensor flow_head(Tape& tape, const Tensor& frame_a, const Tensor& frame_b, const Tensor& feat_a,
                 const Tensor& feat_b, const FlowHeadParams& p) {
    const int s = p.image_hw;
    if (frame_a.shape() != Shape{1, s, s} || frame_b.shape() != frame_a.shape())
        throw DimensionError("flow_head: frames must be 1×" + std::to_string(s) + "×" +
                             std::to_string(s));
    if (feat_a.rank() != 3 || feat_a.dim(0) != p.feat_c || feat_a.dim(1) != s / 8 ||
        feat_a.dim(2) != s / 8 || feat_b.shape() != feat_a.shape())
        throw DimensionError("flow_head: features must be " + std::to_string(p.feat_c) + "×" +
                             std::to_string(s / 8) + "²");
    Tensor x = concat(tape, {frame_a, frame_b}, 0);
    Tensor e1 = relu(tape, conv2d(tape, x, p.enc1_w, p.enc1_b, {2, 2}, {1, 1}));
    Tensor e2 = relu(tape, conv2d(tape, e1, p.enc2_w, p.enc2_b, {2, 2}, {1, 1}));
    Tensor e3 = relu(tape, conv2d(tape, e2, p.enc3_w, p.enc3_b, {2, 2}, {1, 1}));
    Tensor fused = concat(tape, {e3, feat_a, feat_b}, 0);
    fused = relu(tape, conv2d(tape, fused, p.fuse_w, p.fuse_b, {1, 1}, {0, 0}));
    Tensor d1 = conv_transpose2d(tape, fused, p.up1_w, p.up1_b, {2, 2}, {1, 1});
    d1 = concat(tape, {d1, e2}, 0);
    d1 = relu(tape, conv2d(tape, d1, p.mix1_w, p.mix1_b, {1, 1}, {0, 0}));
    Tensor d2 = conv_transpose2d(tape, d1, p.up2_w, p.up2_b, {2, 2}, {1, 1});
    d2 = concat(tape, {d2, e1}, 0);
    d2 = relu(tape, conv2d(tape, d2, p.mix2_w, p.mix2_b, {1, 1}, {0, 0}));
    Tensor d3 = relu(tape, conv_transpose2d(tape, d2, p.up3_w, p.up3_b, {2, 2}, {1, 1}));
    return conv2d(tape, d3, p.out_w, p.out_b, {1, 1}, {1, 1});
}

LandmarkHeadParams LandmarkHeadParams::init(int feat_c, int feat_hw, int n_landmarks, Rng& rng,
                                            ParamStore& store, const std::string& prefix,
                                            int conv_channels, int fc_hidden) {
    LandmarkHeadParams p;
    p.feat_c = feat_c;
    p.feat_hw = feat_hw;
    p.n_landmarks = n_landmarks;
    const int out_hw = conv_out_dim(feat_hw, 3, 2, 0);
    const int flat = conv_channels * out_hw * out_hw;
    p.ln_g = store.add(prefix + ".ln.g", Tensor::full({1}, 1.0));
    p.ln_b = store.add(prefix + ".ln.b", Tensor::zeros({1}));
    p.conv_w = store.add(prefix + ".conv.w",
                         fan_in_uniform({conv_channels, feat_c, 3, 3}, feat_c * 9, rng));
    p.conv_b = store.add(prefix + ".conv.b", Tensor::zeros({conv_channels}));
    p.fc1_w = store.add(prefix + ".fc1.w", fan_in_uniform({fc_hidden, flat}, flat, rng));
    p.fc1_b = store.add(prefix + ".fc1.b", Tensor::zeros({fc_hidden}));
    p.fc2_w = store.add(prefix + ".fc2.w",
                        fan_in_uniform({2 * n_landmarks, fc_hidden}, fc_hidden, rng));
    p.fc2_b = store.add(prefix + ".fc2.b", Tensor::zeros({2 * n_landmarks}));
    return p;
}

Tensor landmark_head(Tape& tape, const Tensor& feat, const LandmarkHeadParams& p) {
    if (feat.rank() != 3 || feat.dim(0) != p.feat_c || feat.dim(1) != p.feat_hw ||
        feat.dim(2) != p.feat_hw)
        throw DimensionError("landmark_head: feature " + shape_str(feat.shape()) +
                             " does not match params");
    Tensor x = layer_norm(tape, feat, p.ln_g, p.ln_b);
    x = relu(tape, conv2d(tape, x, p.conv_w, p.conv_b, {2, 2}, {0, 0}));
    x = reshape(tape, x, {static_cast<int>(x.size())});
    x = relu(tape, fully_connected(tape, x, p.fc1_w, p.fc1_b));
    return fully_connected(tape, x, p.fc2_w, p.fc2_b);
}

}  // namespace menet
