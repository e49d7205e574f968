#pragma once

#include "menet/ops.hpp"

namespace menet {

struct LossWeights {
    double lambda_f = 0.1;
    double lambda_m = 68.0;
};

// Cross entropy over softmax of raw logits.
Tensor ce_loss(Tape& tape, const Tensor& logits, int label);

// Mean over pairs of the per-pair MSE (itself averaged over all 2·H·W elements).
Tensor flow_loss(Tape& tape, const std::vector<Tensor>& pred, const std::vector<Tensor>& gt);

// (1/(m(t−1))) Σ_k Σ_s (|Δx|+|Δy|)/d_o[k]; landmark vectors are length 2m.
Tensor landmark_loss(Tape& tape, const std::vector<Tensor>& pred,
                     const std::vector<Tensor>& gt, const std::vector<double>& inter_ocular);

// L = L_e + λ_f·L_f + λ_m·L_m; pass undefined tensors for disabled tasks.
Tensor full_loss(Tape& tape, const Tensor& l_e, const Tensor& l_f, const Tensor& l_m,
                 const LossWeights& w);

}  // namespace menet
