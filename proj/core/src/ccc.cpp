#include "menet/ccc.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace menet {

ChannelGraph build_knn_graph(const Tensor& x, int k) {
    if (x.rank() != 3) throw DimensionError("build_knn_graph: input must be C×H×W");
    const int c = x.dim(0);
    const int hw = x.dim(1) * x.dim(2);
    if (k < 1 || k > c - 1)
        throw ConfigError("build_knn_graph: k=" + std::to_string(k) + " out of range [1," +
                          std::to_string(c - 1) + "]");
    std::vector<double> norms(static_cast<std::size_t>(c));
    for (int i = 0; i < c; ++i) {
        const double* f = x.data() + static_cast<std::size_t>(i) * hw;
        norms[static_cast<std::size_t>(i)] = std::sqrt(cblas_ddot(hw, f, 1, f, 1));
    }
    ChannelGraph graph;
    graph.k = k;
    graph.neighbors.assign(static_cast<std::size_t>(c), {});
    std::vector<std::pair<double, int>> sims;
    for (int i = 0; i < c; ++i) {
        sims.clear();
        const double* fi = x.data() + static_cast<std::size_t>(i) * hw;
        for (int j = 0; j < c; ++j) {
            if (j == i) continue;
            const double* fj = x.data() + static_cast<std::size_t>(j) * hw;
            const double denom = norms[static_cast<std::size_t>(i)] * norms[static_cast<std::size_t>(j)];
            const double sim = denom > 0.0 ? cblas_ddot(hw, fi, 1, fj, 1) / denom : 0.0;
            sims.emplace_back(sim, j);
        }
        std::sort(sims.begin(), sims.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        });
        auto& nb = graph.neighbors[static_cast<std::size_t>(i)];
        nb.reserve(static_cast<std::size_t>(k));
        for (int s = 0; s < k; ++s) nb.push_back(sims[static_cast<std::size_t>(s)].second);
    }
    return graph;
}

CccParams CccParams::init(int c, int h, int w, Rng& rng, ParamStore& store,
                          const std::string& prefix) {
    CccParams p;
    p.c = c;
    p.h = h;
    p.w = w;
    const int hw = h * w;
    p.v1 = store.add(prefix + ".v1", fan_in_uniform({hw, hw}, hw, rng));
    p.v2 = store.add(prefix + ".v2", fan_in_uniform({hw, hw}, hw, rng));
    p.post_mix_w = store.add(prefix + ".post_mix.w", fan_in_uniform({c, c, 1, 1}, c, rng));
    p.post_mix_b = store.add(prefix + ".post_mix.b", Tensor::zeros({c}));
    return p;
}

Tensor edge_feature(Tape& tape, const Tensor& f_i, const Tensor& f_j, const CccParams& p) {
    const int hw = p.h * p.w;
    if (f_i.rank() != 1 || f_i.dim(0) != hw || f_j.shape() != f_i.shape())
        throw DimensionError("edge_feature: vectors must be length " + std::to_string(hw));
    Tensor zero_bias = Tensor::zeros({hw});
    Tensor a = fully_connected(tape, f_i, p.v1, zero_bias);
    Tensor diff = sub(tape, f_j, f_i);
    Tensor b = fully_connected(tape, diff, p.v2, zero_bias);
    return relu(tape, add(tape, a, b));
}

namespace {

// out[i,s] = ReLU(max_{j in N(i)} (a[i,s] + b[j,s] - b[i,s])), with the
// gradient routed through the maximizing edge only.
Tensor neighbor_max(Tape& tape, const Tensor& a, const Tensor& b, const ChannelGraph& graph) {
    const int c = a.dim(0), hw = a.dim(1);
    Tensor out = Tensor::zeros(a.shape());
    auto arg = std::make_shared<std::vector<int>>(a.size());  // winning neighbor, -1 if clipped
    for (int i = 0; i < c; ++i) {
        const auto& nb = graph.neighbors[static_cast<std::size_t>(i)];
        for (int s = 0; s < hw; ++s) {
            const std::size_t idx = static_cast<std::size_t>(i) * hw + s;
            double best = -std::numeric_limits<double>::infinity();
            int best_j = -1;
            for (int j : nb) {
                const double z =
                    a.at(idx) + b.at(static_cast<std::size_t>(j) * hw + s) - b.at(static_cast<std::size_t>(i) * hw + s);
                if (z > best || (z == best && j < best_j)) {
                    best = z;
                    best_j = j;
                }
            }
            if (best > 0.0) {
                out.at(idx) = best;
                (*arg)[idx] = best_j;
            } else {
                out.at(idx) = 0.0;
                (*arg)[idx] = -1;
            }
        }
    }
    tape.record({a, b}, out, [a, b, arg, c, hw](GradMap& g, const std::vector<double>& og) mutable {
        auto& da = grad_buf(g, a);
        auto& db = grad_buf(g, b);
        for (int i = 0; i < c; ++i)
            for (int s = 0; s < hw; ++s) {
                const std::size_t idx = static_cast<std::size_t>(i) * hw + s;
                const int j = (*arg)[idx];
                if (j < 0) continue;
                da[idx] += og[idx];
                db[static_cast<std::size_t>(j) * hw + s] += og[idx];
                db[static_cast<std::size_t>(i) * hw + s] -= og[idx];
            }
    });
    return out;
}

}  // namespace

Tensor ccc_forward(Tape& tape, const Tensor& x, const CccParams& p, int k) {
    if (x.rank() != 3 || x.dim(0) != p.c || x.dim(1) != p.h || x.dim(2) != p.w)
        throw DimensionError("ccc_forward: input " + shape_str(x.shape()) + " does not match params");
    const int hw = p.h * p.w;
    ChannelGraph graph = build_knn_graph(x, k);
    Tensor f = reshape(tape, x, {p.c, hw});
    Tensor a = matmul_nt(tape, f, p.v1);  // a[i,s] = v_s^(1)·f_i
    Tensor b = matmul_nt(tape, f, p.v2);  // b[i,s] = v_s^(2)·f_i
    Tensor agg = neighbor_max(tape, a, b, graph);
    Tensor maps = reshape(tape, agg, {p.c, p.h, p.w});
    return conv2d(tape, maps, p.post_mix_w, p.post_mix_b, {1, 1}, {0, 0});
}

}  // namespace menet
