#pragma once

#include <array>

#include "menet/gradcheck.hpp"
#include "menet/ops.hpp"
#include "menet/params.hpp"

namespace menet {

struct ConvLayerSpec {
    int c_in, c_out, kernel;
    std::array<int, 2> stride;
    std::array<int, 2> pad;
    bool relu_after;
};

// The stride-2 stack that turns one grayscale frame into the rich feature
// map. Default geometry: 1×128×128 → 8×63×63 → 32×31×31 → 64×16×16 →
// 128×16×16 with ReLU after the first three layers.
struct BackboneParams {
    std::vector<ConvLayerSpec> layers;
    std::vector<Tensor> weights;
    std::vector<Tensor> biases;
    int input_hw = 128;

    static std::vector<ConvLayerSpec> default_layers();
    static BackboneParams init(Rng& rng, ParamStore& store, const std::string& prefix,
                               std::vector<ConvLayerSpec> layers = default_layers(),
                               int input_hw = 128);
};

// Shape chain implied by the layer specs for a square input; throws
// ConfigError when the chain is infeasible.
std::vector<Shape> backbone_shape_chain(const std::vector<ConvLayerSpec>& layers, int input_hw);

Tensor rich_feature(Tape& tape, const Tensor& frame, const BackboneParams& p);

}  // namespace menet
