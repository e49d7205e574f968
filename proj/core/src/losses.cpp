#include "menet/losses.hpp"

namespace menet {

Tensor ce_loss(Tape& tape, const Tensor& logits, int label) {
    return softmax_ce(tape, logits, label);
}

Tensor flow_loss(Tape& tape, const std::vector<Tensor>& pred, const std::vector<Tensor>& gt) {
    if (pred.empty() || pred.size() != gt.size())
        throw DimensionError("flow_loss: prediction/ground-truth count mismatch");
    Tensor acc;
    for (std::size_t k = 0; k < pred.size(); ++k) {
        Tensor term = mse_loss(tape, pred[k], gt[k]);
        acc = acc.defined() ? add(tape, acc, term) : term;
    }
    return scale(tape, acc, 1.0 / static_cast<double>(pred.size()));
}

Tensor landmark_loss(Tape& tape, const std::vector<Tensor>& pred, const std::vector<Tensor>& gt,
                     const std::vector<double>& inter_ocular) {
    if (pred.empty() || pred.size() != gt.size() || pred.size() != inter_ocular.size())
        throw DimensionError("landmark_loss: prediction/ground-truth count mismatch");
    const int m = pred[0].dim(0) / 2;
    Tensor acc;
    for (std::size_t k = 0; k < pred.size(); ++k) {
        if (!(inter_ocular[k] > 0.0))
            throw ConfigError("landmark_loss: non-positive inter-ocular distance");
        Tensor term = normalized_l1(tape, pred[k], gt[k], inter_ocular[k]);
        acc = acc.defined() ? add(tape, acc, term) : term;
    }
    return scale(tape, acc, 1.0 / (static_cast<double>(m) * static_cast<double>(pred.size())));
}

Tensor full_loss(Tape& tape, const Tensor& l_e, const Tensor& l_f, const Tensor& l_m,
                 const LossWeights& w) {
    if (w.lambda_f < 0.0 || w.lambda_m < 0.0)
        throw ConfigError("full_loss: negative loss weight");
    Tensor total = l_e;
    if (l_f.defined()) {
        Tensor t = scale(tape, l_f, w.lambda_f);
        total = total.defined() ? add(tape, total, t) : t;
    }
    if (l_m.defined()) {
        Tensor t = scale(tape, l_m, w.lambda_m);
        total = total.defined() ? add(tape, total, t) : t;
    }
    if (!total.defined()) throw ConfigError("full_loss: no loss terms");
    return total;
}

}  // namespace menet
