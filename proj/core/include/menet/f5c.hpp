#pragma once

#include "menet/ccc.hpp"
#include "menet/fcc.hpp"

namespace menet {

struct F5cParams {
    FccParams fcc;
    CccParams ccc;

    static F5cParams init(int c, int h, int w, Rng& rng, ParamStore& store,
                          const std::string& prefix) {
        F5cParams p;
        p.fcc = FccParams::init(c, h, w, rng, store, prefix + ".fcc");
        p.ccc = CccParams::init(c, h, w, rng, store, prefix + ".ccc");
        return p;
    }
};

// y1 = x + fcc_block(x); y = y1 + ccc_forward(y1). Either operation can be
// switched off (ablations), which removes that residual branch entirely.
Tensor f5c_forward(Tape& tape, const Tensor& x, const F5cParams& p, int k, bool use_fcc = true,
                   bool use_ccc = true);

}  // namespace menet
