#pragma once

// Naive reference implementations used to pin down the fast paths. These are
// deliberately written as direct loops with no shared code with the library.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include "menet/tensor.hpp"

namespace oracle {

using menet::Tensor;

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::fabs(a.at(i) - b.at(i)));
    return m;
}

// x: C_in×H×W, w: C_out×C_in×kh×kw
inline Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, std::array<int, 2> stride,
                     std::array<int, 2> pad) {
    const int ci = x.dim(0), h = x.dim(1), ww = x.dim(2);
    const int co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    const int oh = (h + 2 * pad[0] - kh) / stride[0] + 1;
    const int ow = (ww + 2 * pad[1] - kw) / stride[1] + 1;
    Tensor out = Tensor::zeros({co, oh, ow});
    for (int o = 0; o < co; ++o)
        for (int y = 0; y < oh; ++y)
            for (int xo = 0; xo < ow; ++xo) {
                double acc = b.at(static_cast<std::size_t>(o));
                for (int c = 0; c < ci; ++c)
                    for (int a = 0; a < kh; ++a)
                        for (int e = 0; e < kw; ++e) {
                            const int iy = y * stride[0] - pad[0] + a;
                            const int ix = xo * stride[1] - pad[1] + e;
                            if (iy < 0 || iy >= h || ix < 0 || ix >= ww) continue;
                            acc += x.at((static_cast<std::size_t>(c) * h + iy) * ww + ix) *
                                   w.at(((static_cast<std::size_t>(o) * ci + c) * kh + a) * kw + e);
                        }
                out.at((static_cast<std::size_t>(o) * oh + y) * ow + xo) = acc;
            }
    return out;
}

// x: C_in×D×H×W, w: C_out×C_in×kd×kh×kw
inline Tensor conv3d(const Tensor& x, const Tensor& w, const Tensor& b, std::array<int, 3> stride,
                     std::array<int, 3> pad) {
    const int ci = x.dim(0), d = x.dim(1), h = x.dim(2), ww = x.dim(3);
    const int co = w.dim(0), kd = w.dim(2), kh = w.dim(3), kw = w.dim(4);
    const int od = (d + 2 * pad[0] - kd) / stride[0] + 1;
    const int oh = (h + 2 * pad[1] - kh) / stride[1] + 1;
    const int ow = (ww + 2 * pad[2] - kw) / stride[2] + 1;
    Tensor out = Tensor::zeros({co, od, oh, ow});
    for (int o = 0; o < co; ++o)
        for (int z = 0; z < od; ++z)
            for (int y = 0; y < oh; ++y)
                for (int xo = 0; xo < ow; ++xo) {
                    double acc = b.at(static_cast<std::size_t>(o));
                    for (int c = 0; c < ci; ++c)
                        for (int t = 0; t < kd; ++t)
                            for (int a = 0; a < kh; ++a)
                                for (int e = 0; e < kw; ++e) {
                                    const int iz = z * stride[0] - pad[0] + t;
                                    const int iy = y * stride[1] - pad[1] + a;
                                    const int ix = xo * stride[2] - pad[2] + e;
                                    if (iz < 0 || iz >= d || iy < 0 || iy >= h || ix < 0 ||
                                        ix >= ww)
                                        continue;
                                    acc += x.at(((static_cast<std::size_t>(c) * d + iz) * h + iy) *
                                                    ww + ix) *
                                           w.at((((static_cast<std::size_t>(o) * ci + c) * kd + t) *
                                                     kh + a) * kw + e);
                                }
                    out.at(((static_cast<std::size_t>(o) * od + z) * oh + y) * ow + xo) = acc;
                }
    return out;
}

// x: C_in×H×W, w: C_in×C_out×kh×kw (transposed-conv layout)
inline Tensor conv_transpose2d(const Tensor& x, const Tensor& w, const Tensor& b,
                               std::array<int, 2> stride, std::array<int, 2> pad) {
    const int ci = x.dim(0), h = x.dim(1), ww = x.dim(2);
    const int co = w.dim(1), kh = w.dim(2), kw = w.dim(3);
    const int oh = (h - 1) * stride[0] - 2 * pad[0] + kh;
    const int ow = (ww - 1) * stride[1] - 2 * pad[1] + kw;
    Tensor out = Tensor::zeros({co, oh, ow});
    for (int o = 0; o < co; ++o)
        for (std::size_t i = 0; i < static_cast<std::size_t>(oh) * ow; ++i)
            out.at(static_cast<std::size_t>(o) * oh * ow + i) = b.at(static_cast<std::size_t>(o));
    for (int c = 0; c < ci; ++c)
        for (int y = 0; y < h; ++y)
            for (int xi = 0; xi < ww; ++xi)
                for (int o = 0; o < co; ++o)
                    for (int a = 0; a < kh; ++a)
                        for (int e = 0; e < kw; ++e) {
                            const int oy = y * stride[0] - pad[0] + a;
                            const int ox = xi * stride[1] - pad[1] + e;
                            if (oy < 0 || oy >= oh || ox < 0 || ox >= ow) continue;
                            out.at((static_cast<std::size_t>(o) * oh + oy) * ow + ox) +=
                                x.at((static_cast<std::size_t>(c) * h + y) * ww + xi) *
                                w.at(((static_cast<std::size_t>(c) * co + o) * kh + a) * kw + e);
                        }
    return out;
}

// Circular vertical/horizontal fully-connected slice mixing with additive
// positional embedding: out(c,i,j) = Σ_s u(c,s)·(x + P)(c, (i+s) mod H, j).
inline Tensor fcc_axis(const Tensor& x, const Tensor& u, const Tensor& p, bool vertical) {
    const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    Tensor out = Tensor::zeros(x.shape());
    for (int ci = 0; ci < c; ++ci)
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j) {
                double acc = 0.0;
                const int span = vertical ? h : w;
                for (int s = 0; s < span; ++s) {
                    double val;
                    if (vertical) {
                        const int row = (i + s) % h;
                        val = x.at((static_cast<std::size_t>(ci) * h + row) * w + j) +
                              p.at(static_cast<std::size_t>(ci) * h + row);
                    } else {
                        const int col = (j + s) % w;
                        val = x.at((static_cast<std::size_t>(ci) * h + i) * w + col) +
                              p.at(static_cast<std::size_t>(ci) * w + col);
                    }
                    acc += u.at(static_cast<std::size_t>(ci) * span + s) * val;
                }
                out.at((static_cast<std::size_t>(ci) * h + i) * w + j) = acc;
            }
    return out;
}

// Cosine-similarity k-NN over channels, then for each channel i the
// elementwise ReLU'd max over neighbors of V1·f_i + V2·(f_j − f_i).
inline Tensor ccc_aggregate(const Tensor& x, const Tensor& v1, const Tensor& v2, int k) {
    const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    const int hw = h * w;
    std::vector<std::vector<double>> f(static_cast<std::size_t>(c));
    for (int i = 0; i < c; ++i)
        f[static_cast<std::size_t>(i)].assign(x.data() + static_cast<std::size_t>(i) * hw,
                                              x.data() + static_cast<std::size_t>(i + 1) * hw);
    auto dot = [&](int a, int b) {
        double s = 0;
        for (int e = 0; e < hw; ++e)
            s += f[static_cast<std::size_t>(a)][static_cast<std::size_t>(e)] *
                 f[static_cast<std::size_t>(b)][static_cast<std::size_t>(e)];
        return s;
    };
    Tensor out = Tensor::zeros({c, hw});
    for (int i = 0; i < c; ++i) {
        std::vector<std::pair<double, int>> sims;
        for (int j = 0; j < c; ++j) {
            if (j == i) continue;
            const double ni = std::sqrt(dot(i, i)), nj = std::sqrt(dot(j, j));
            const double sim = (ni == 0.0 || nj == 0.0) ? 0.0 : dot(i, j) / (ni * nj);
            sims.emplace_back(sim, j);
        }
        std::sort(sims.begin(), sims.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        });
        for (int s = 0; s < hw; ++s) {
            double ai = 0, bi = 0;
            for (int e = 0; e < hw; ++e) {
                ai += v1.at(static_cast<std::size_t>(s) * hw + e) *
                      f[static_cast<std::size_t>(i)][static_cast<std::size_t>(e)];
                bi += v2.at(static_cast<std::size_t>(s) * hw + e) *
                      f[static_cast<std::size_t>(i)][static_cast<std::size_t>(e)];
            }
            double best = -std::numeric_limits<double>::infinity();
            for (int n = 0; n < k; ++n) {
                const int j = sims[static_cast<std::size_t>(n)].second;
                double bj = 0;
                for (int e = 0; e < hw; ++e)
                    bj += v2.at(static_cast<std::size_t>(s) * hw + e) *
                          f[static_cast<std::size_t>(j)][static_cast<std::size_t>(e)];
                best = std::max(best, ai + bj - bi);
            }
            out.at(static_cast<std::size_t>(i) * hw + s) = std::max(best, 0.0);
        }
    }
    return out;
}

}  // namespace oracle
