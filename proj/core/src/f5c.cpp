#include "menet/f5c.hpp"

namespace menet {

Tensor f5c_forward(Tape& tape, const Tensor& x, const F5cParams& p, int k, bool use_fcc,
                   bool use_ccc) {
    Tensor y = x;
    if (use_fcc) y = add(tape, y, fcc_block(tape, y, p.fcc));
    if (use_ccc) y = add(tape, y, ccc_forward(tape, y, p.ccc, k));
    return y;
}

}  // namespace menet
