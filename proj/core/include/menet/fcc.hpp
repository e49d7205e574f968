#pragma once

#include "menet/gradcheck.hpp"
#include "menet/ops.hpp"
#include "menet/params.hpp"

namespace menet {

// One FCC-V or FCC-H occurrence: circular weights u (C×H or C×W) and a
// positional embedding p of the same shape. Each occurrence in the block owns
// its own slot; there is no weight sharing across the two branches.
struct FccSlot {
    Tensor u;
    Tensor p;
};

struct FccParams {
    int c = 0, h = 0, w = 0;
    Tensor pre_mix_w, pre_mix_b;    // 1×1 conv C→C
    Tensor post_mix_w, post_mix_b;  // 1×1 conv 2C→C
    FccSlot b1_v, b1_h;             // branch 1: FCC-V then FCC-H
    FccSlot b2_h, b2_v;             // branch 2: FCC-H then FCC-V

    // u gets fan-in uniform noise, positional embeddings start at zero so the
    // delta-kernel identities hold exactly at initialization.
    static FccParams init(int c, int h, int w, Rng& rng, ParamStore& store,
                          const std::string& prefix);
};

// y(c,i,j) = Σ_s u(c,s) · (x + p)(c, (i+s) mod H, j)
Tensor fcc_v(Tape& tape, const Tensor& x, const FccSlot& slot);
// Same along the width axis with modulus W.
Tensor fcc_h(Tape& tape, const Tensor& x, const FccSlot& slot);

// post_mix(concat(fcc_h(fcc_v(x')), fcc_v(fcc_h(x')))) with x' = pre_mix(x).
Tensor fcc_block(Tape& tape, const Tensor& x, const FccParams& p);

}  // namespace menet
