#include "menet/fcc.hpp"

namespace menet {

FccParams FccParams::init(int c, int h, int w, Rng& rng, ParamStore& store,
                          const std::string& prefix) {
    FccParams p;
    p.c = c;
    p.h = h;
    p.w = w;
    p.pre_mix_w = store.add(prefix + ".pre_mix.w", fan_in_uniform({c, c, 1, 1}, c, rng));
    p.pre_mix_b = store.add(prefix + ".pre_mix.b", Tensor::zeros({c}));
    p.post_mix_w =
        store.add(prefix + ".post_mix.w", fan_in_uniform({c, 2 * c, 1, 1}, 2 * c, rng));
    p.post_mix_b = store.add(prefix + ".post_mix.b", Tensor::zeros({c}));
    auto slot = [&](const std::string& name, int span) {
        FccSlot s;
        s.u = store.add(prefix + "." + name + ".u", fan_in_uniform({c, span}, span, rng));
        s.p = store.add(prefix + "." + name + ".p", Tensor::zeros({c, span}));
        return s;
    };
    p.b1_v = slot("b1_v", h);
    p.b1_h = slot("b1_h", w);
    p.b2_h = slot("b2_h", w);
    p.b2_v = slot("b2_v", h);
    return p;
}

Tensor fcc_v(Tape& tape, const Tensor& x, const FccSlot& slot) {
    Tensor xv = broadcast_add_columns(tape, x, slot.p, EmbedAxis::Vertical);
    return circular_fc(tape, xv, slot.u, EmbedAxis::Vertical);
}

Tensor fcc_h(Tape& tape, const Tensor& x, const FccSlot& slot) {
    Tensor xh = broadcast_add_columns(tape, x, slot.p, EmbedAxis::Horizontal);
    return circular_fc(tape, xh, slot.u, EmbedAxis::Horizontal);
}

Tensor fcc_block(Tape& tape, const Tensor& x, const FccParams& p) {
    Tensor pre = conv2d(tape, x, p.pre_mix_w, p.pre_mix_b, {1, 1}, {0, 0});
    Tensor branch1 = fcc_h(tape, fcc_v(tape, pre, p.b1_v), p.b1_h);
    Tensor branch2 = fcc_v(tape, fcc_h(tape, pre, p.b2_h), p.b2_v);
    Tensor both = concat(tape, {branch1, branch2}, 0);
    return conv2d(tape, both, p.post_mix_w, p.post_mix_b, {1, 1}, {0, 0});
}

}  // namespace menet
