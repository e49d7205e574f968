#pragma once

#include "menet/gradcheck.hpp"
#include "menet/ops.hpp"
#include "menet/params.hpp"

namespace menet {

// Directed k-NN graph over feature-map channels. neighbors[i] holds exactly k
// channel indices, ordered by descending cosine similarity with ties broken
// toward the lower channel index; i never neighbors itself.
struct ChannelGraph {
    int k = 0;
    std::vector<std::vector<int>> neighbors;
};

// Cosine similarity over flattened channels; a zero-norm channel has
// similarity 0 to every other channel. Rebuilt on every forward pass.
ChannelGraph build_knn_graph(const Tensor& x, int k);

struct CccParams {
    int c = 0, h = 0, w = 0;
    Tensor v1, v2;                  // HW×HW; row s holds v_s
    Tensor post_mix_w, post_mix_b;  // 1×1 conv C→C

    static CccParams init(int c, int h, int w, Rng& rng, ParamStore& store,
                          const std::string& prefix);
};

// e_{i,j} = ReLU(V1·f_i + V2·(f_j − f_i)) for one directed edge; f_i, f_j are
// flattened HW vectors.
Tensor edge_feature(Tape& tape, const Tensor& f_i, const Tensor& f_j, const CccParams& p);

// Per-channel elementwise max of edge features over the k-NN neighbors,
// reshaped to C×H×W and passed through the 1×1 mixing convolution. Graph
// construction is a discrete selection and carries no gradient; the max
// routes gradient to the argmax neighbor (ties to the lowest channel index).
Tensor ccc_forward(Tape& tape, const Tensor& x, const CccParams& p, int k);

}  // namespace menet
