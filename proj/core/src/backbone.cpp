#include "menet/backbone.hpp"

namespace menet {

std::vector<ConvLayerSpec> BackboneParams::default_layers() {
    return {
        {1, 8, 4, {2, 2}, {0, 0}, true},
        {8, 32, 3, {2, 2}, {0, 0}, true},
        {32, 64, 2, {2, 2}, {1, 1}, true},
        {64, 128, 1, {1, 1}, {0, 0}, false},
    };
}

BackboneParams BackboneParams::init(Rng& rng, ParamStore& store, const std::string& prefix,
                                    std::vector<ConvLayerSpec> layers, int input_hw) {
    BackboneParams p;
    p.layers = std::move(layers);
    p.input_hw = input_hw;
    backbone_shape_chain(p.layers, input_hw);  // validate geometry up front
    for (std::size_t i = 0; i < p.layers.size(); ++i) {
        const auto& l = p.layers[i];
        const int fan_in = l.c_in * l.kernel * l.kernel;
        const std::string name = prefix + ".conv" + std::to_string(i + 1);
        p.weights.push_back(
            store.add(name + ".w", fan_in_uniform({l.c_out, l.c_in, l.kernel, l.kernel}, fan_in, rng)));
        p.biases.push_back(store.add(name + ".b", Tensor::zeros({l.c_out})));
    }
    return p;
}

std::vector<Shape> backbone_shape_chain(const std::vector<ConvLayerSpec>& layers, int input_hw) {
    std::vector<Shape> chain;
    Shape cur = {layers.empty() ? 1 : layers.front().c_in, input_hw, input_hw};
    chain.push_back(cur);
    for (const auto& l : layers) {
        if (cur[0] != l.c_in)
            throw ConfigError("backbone layer channel mismatch: have " + shape_str(cur));
        cur = conv2d_out_shape(cur, {l.c_out, l.c_in, l.kernel, l.kernel}, l.stride, l.pad);
        chain.push_back(cur);
    }
    return chain;
}

Tensor rich_feature(Tape& tape, const Tensor& frame, const BackboneParams& p) {
    const Shape expect = {p.layers.front().c_in, p.input_hw, p.input_hw};
    if (frame.shape() != expect)
        throw DimensionError("rich_feature: expected frame " + shape_str(expect) + ", got " +
                             shape_str(frame.shape()));
    Tensor x = frame;
    for (std::size_t i = 0; i < p.layers.size(); ++i) {
        const auto& l = p.layers[i];
        x = conv2d(tape, x, p.weights[i], p.biases[i], l.stride, l.pad);
        if (l.relu_after) x = relu(tape, x);
    }
    return x;
}

}  // namespace menet
