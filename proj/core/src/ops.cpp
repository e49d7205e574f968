#include "menet/ops.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

namespace menet {

namespace {

bool g_finite_checks = true;

void check_finite(const Tensor& t, const char* op) {
    if (!g_finite_checks) return;
    if (!all_finite(t)) throw std::overflow_error(std::string(op) + ": non-finite output");
}

void require(bool cond, const std::string& msg) {
    if (!cond) throw DimensionError(msg);
}

// ---- im2col / col2im (3D; 2D uses a singleton time axis) -------------------

struct ConvGeom {
    int ci, t, h, w;        // input
    int kt, kh, kw;         // kernel
    int st, sh, sw;         // stride
    int pt, ph, pw;         // padding
    int to, ho, wo;         // output
    int rows() const { return ci * kt * kh * kw; }
    int cols() const { return to * ho * wo; }
};

void im2col(const double* x, const ConvGeom& g, double* col) {
    const int plane = g.h * g.w;
    const int vol = g.t * plane;
    int row = 0;
    for (int c = 0; c < g.ci; ++c) {
        const double* xc = x + static_cast<std::size_t>(c) * vol;
        for (int dt = 0; dt < g.kt; ++dt)
            for (int dh = 0; dh < g.kh; ++dh)
                for (int dw = 0; dw < g.kw; ++dw, ++row) {
                    double* out = col + static_cast<std::size_t>(row) * g.cols();
                    for (int ot = 0; ot < g.to; ++ot) {
                        const int it = ot * g.st - g.pt + dt;
                        for (int oh = 0; oh < g.ho; ++oh) {
                            const int ih = oh * g.sh - g.ph + dh;
                            double* dst = out + (static_cast<std::size_t>(ot) * g.ho + oh) * g.wo;
                            if (it < 0 || it >= g.t || ih < 0 || ih >= g.h) {
                                std::memset(dst, 0, sizeof(double) * static_cast<std::size_t>(g.wo));
                                continue;
                            }
                            const double* src = xc + it * plane + ih * g.w;
                            for (int ow = 0; ow < g.wo; ++ow) {
                                const int iw = ow * g.sw - g.pw + dw;
                                dst[ow] = (iw >= 0 && iw < g.w) ? src[iw] : 0.0;
                            }
                        }
                    }
                }
    }
}

void col2im_add(const double* col, const ConvGeom& g, double* x) {
    const int plane = g.h * g.w;
    const int vol = g.t * plane;
    int row = 0;
    for (int c = 0; c < g.ci; ++c) {
        double* xc = x + static_cast<std::size_t>(c) * vol;
        for (int dt = 0; dt < g.kt; ++dt)
            for (int dh = 0; dh < g.kh; ++dh)
                for (int dw = 0; dw < g.kw; ++dw, ++row) {
                    const double* in = col + static_cast<std::size_t>(row) * g.cols();
                    for (int ot = 0; ot < g.to; ++ot) {
                        const int it = ot * g.st - g.pt + dt;
                        if (it < 0 || it >= g.t) continue;
                        for (int oh = 0; oh < g.ho; ++oh) {
                            const int ih = oh * g.sh - g.ph + dh;
                            if (ih < 0 || ih >= g.h) continue;
                            const double* src = in + (static_cast<std::size_t>(ot) * g.ho + oh) * g.wo;
                            double* dst = xc + it * plane + ih * g.w;
                            for (int ow = 0; ow < g.wo; ++ow) {
                                const int iw = ow * g.sw - g.pw + dw;
                                if (iw >= 0 && iw < g.w) dst[iw] += src[ow];
                            }
                        }
                    }
                }
    }
}

// Row-major C = alpha·op(A)·op(B) + beta·C.
void dgemm(bool ta, bool tb, int m, int n, int k, const double* a, const double* b, double* c,
           double alpha = 1.0, double beta = 0.0) {
    cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, m,
                n, k, alpha, a, ta ? m : k, b, tb ? k : n, beta, c, n);
}

}  // namespace

void set_finite_checks(bool enabled) { g_finite_checks = enabled; }
bool finite_checks_enabled() { return g_finite_checks; }

// ---- shape inference --------------------------------------------------------

int conv_out_dim(int in, int k, int stride, int pad) {
    if (stride <= 0) throw ConfigError("stride must be positive");
    const int out = (in + 2 * pad - k) / stride + 1;
    if (in + 2 * pad < k || out <= 0)
        throw ConfigError("non-positive convolution output dimension (in=" + std::to_string(in) +
                          " k=" + std::to_string(k) + " stride=" + std::to_string(stride) +
                          " pad=" + std::to_string(pad) + ")");
    return out;
}

int conv_transpose_out_dim(int in, int k, int stride, int pad) {
    const int out = (in - 1) * stride - 2 * pad + k;
    if (out <= 0) throw ConfigError("non-positive transpose-convolution output dimension");
    return out;
}

Shape conv2d_out_shape(const Shape& x, const Shape& w, std::array<int, 2> stride,
                       std::array<int, 2> pad) {
    require(x.size() == 3, "conv2d input must be C×H×W, got " + shape_str(x));
    require(w.size() == 4, "conv2d kernel must be Cout×Cin×kh×kw, got " + shape_str(w));
    require(x[0] == w[1], "conv2d channel mismatch: input " + shape_str(x) + " kernel " + shape_str(w));
    return {w[0], conv_out_dim(x[1], w[2], stride[0], pad[0]),
            conv_out_dim(x[2], w[3], stride[1], pad[1])};
}

Shape conv3d_out_shape(const Shape& x, const Shape& w, std::array<int, 3> stride,
                       std::array<int, 3> pad) {
    require(x.size() == 4, "conv3d input must be C×T×H×W, got " + shape_str(x));
    require(w.size() == 5, "conv3d kernel must be Cout×Cin×kt×kh×kw, got " + shape_str(w));
    require(x[0] == w[1], "conv3d channel mismatch: input " + shape_str(x) + " kernel " + shape_str(w));
    return {w[0], conv_out_dim(x[1], w[2], stride[0], pad[0]),
            conv_out_dim(x[2], w[3], stride[1], pad[1]),
            conv_out_dim(x[3], w[4], stride[2], pad[2])};
}

Shape conv_transpose2d_out_shape(const Shape& x, const Shape& w, std::array<int, 2> stride,
                                 std::array<int, 2> pad) {
    require(x.size() == 3, "conv_transpose2d input must be C×H×W, got " + shape_str(x));
    require(w.size() == 4, "conv_transpose2d kernel must be Cin×Cout×kh×kw, got " + shape_str(w));
    require(x[0] == w[0], "conv_transpose2d channel mismatch");
    return {w[1], conv_transpose_out_dim(x[1], w[2], stride[0], pad[0]),
            conv_transpose_out_dim(x[2], w[3], stride[1], pad[1])};
}

Shape maxpool3d_out_shape(const Shape& x, std::array<int, 3> kernel, std::array<int, 3> stride) {
    require(x.size() == 4, "maxpool3d input must be C×T×H×W, got " + shape_str(x));
    return {x[0], conv_out_dim(x[1], kernel[0], stride[0], 0),
            conv_out_dim(x[2], kernel[1], stride[1], 0),
            conv_out_dim(x[3], kernel[2], stride[2], 0)};
}

// ---- elementwise / structural -----------------------------------------------

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
    require(a.shape() == b.shape(), "add: shape mismatch " + shape_str(a.shape()) + " vs " +
                                        shape_str(b.shape()));
    Tensor out = Tensor::zeros(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out.at(i) = a.at(i) + b.at(i);
    check_finite(out, "add");
    tape.record({a, b}, out, [a, b](GradMap& g, const std::vector<double>& og) mutable {
        auto& da = grad_buf(g, a);
        auto& db = grad_buf(g, b);
        for (std::size_t i = 0; i < og.size(); ++i) {
            da[i] += og[i];
            db[i] += og[i];
        }
    });
    return out;
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
    require(a.shape() == b.shape(), "sub: shape mismatch");
    Tensor out = Tensor::zeros(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out.at(i) = a.at(i) - b.at(i);
    check_finite(out, "sub");
    tape.record({a, b}, out, [a, b](GradMap& g, const std::vector<double>& og) mutable {
        auto& da = grad_buf(g, a);
        auto& db = grad_buf(g, b);
        for (std::size_t i = 0; i < og.size(); ++i) {
            da[i] += og[i];
            db[i] -= og[i];
        }
    });
    return out;
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
    require(a.shape() == b.shape(), "mul: shape mismatch");
    Tensor out = Tensor::zeros(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out.at(i) = a.at(i) * b.at(i);
    check_finite(out, "mul");
    tape.record({a, b}, out, [a, b](GradMap& g, const std::vector<double>& og) mutable {
        auto& da = grad_buf(g, a);
        auto& db = grad_buf(g, b);
        for (std::size_t i = 0; i < og.size(); ++i) {
            da[i] += og[i] * b.at(i);
            db[i] += og[i] * a.at(i);
        }
    });
    return out;
}

Tensor scale(Tape& tape, const Tensor& a, double factor) {
    Tensor out = Tensor::zeros(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out.at(i) = a.at(i) * factor;
    check_finite(out, "scale");
    tape.record({a}, out, [a, factor](GradMap& g, const std::vector<double>& og) mutable {
        auto& da = grad_buf(g, a);
        for (std::size_t i = 0; i < og.size(); ++i) da[i] += og[i] * factor;
    });
    return out;
}

Tensor relu(Tape& tape, const Tensor& a) {
    Tensor out = Tensor::zeros(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out.at(i) = a.at(i) > 0.0 ? a.at(i) : 0.0;
    tape.record({a}, out, [a](GradMap& g, const std::vector<double>& og) mutable {
        auto& da = grad_buf(g, a);
        for (std::size_t i = 0; i < og.size(); ++i)
            if (a.at(i) > 0.0) da[i] += og[i];  // subgradient at exactly 0 is 0
    });
    return out;
}

Tensor concat(Tape& tape, const std::vector<Tensor>& parts, int axis) {
    require(!parts.empty(), "concat: no operands");
    const Shape& s0 = parts[0].shape();
    require(axis >= 0 && axis < static_cast<int>(s0.size()), "concat: axis out of range");
    Shape out_shape = s0;
    out_shape[axis] = 0;
    for (const auto& p : parts) {
        require(p.rank() == static_cast<int>(s0.size()), "concat: rank mismatch");
        for (int d = 0; d < p.rank(); ++d)
            require(d == axis || p.dim(d) == s0[d], "concat: shape mismatch off-axis");
        out_shape[axis] += p.dim(axis);
    }
    std::size_t outer = 1, inner = 1;
    for (int d = 0; d < axis; ++d) outer *= static_cast<std::size_t>(s0[d]);
    for (std::size_t d = axis + 1; d < s0.size(); ++d) inner *= static_cast<std::size_t>(s0[d]);

    Tensor out = Tensor::zeros(out_shape);
    const std::size_t out_row = static_cast<std::size_t>(out_shape[axis]) * inner;
    std::size_t offset = 0;
    for (const auto& p : parts) {
        const std::size_t row = static_cast<std::size_t>(p.dim(axis)) * inner;
        for (std::size_t o = 0; o < outer; ++o)
            std::memcpy(out.data() + o * out_row + offset, p.data() + o * row,
                        row * sizeof(double));
        offset += row;
    }
    tape.record(parts, out,
                [parts, outer, inner, out_row](GradMap& g, const std::vector<double>& og) mutable {
                    std::size_t offset = 0;
                    for (auto& p : parts) {
                        auto& dp = grad_buf(g, p);
                        const std::size_t prow = dp.size() / outer;
                        for (std::size_t o = 0; o < outer; ++o)
                            for (std::size_t i = 0; i < prow; ++i)
                                dp[o * prow + i] += og[o * out_row + offset + i];
                        offset += prow;
                    }
                });
    return out;
}

Tensor reshape(Tape& tape, const Tensor& a, Shape shape) {
    require(numel(shape) == a.size(),
            "reshape: element count mismatch " + shape_str(a.shape()) + " -> " + shape_str(shape));
    Tensor out = Tensor::from(std::move(shape), a.values());
    tape.record({a}, out, [a](GradMap& g, const std::vector<double>& og) mutable {
        auto& da = grad_buf(g, a);
        for (std::size_t i = 0; i < og.size(); ++i) da[i] += og[i];
    });
    return out;
}

Tensor sum(Tape& tape, const Tensor& a) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a.at(i);
    Tensor out = Tensor::from({1}, {s});
    check_finite(out, "sum");
    tape.record({a}, out, [a](GradMap& g, const std::vector<double>& og) mutable {
        auto& da = grad_buf(g, a);
        for (std::size_t i = 0; i < da.size(); ++i) da[i] += og[0];
    });
    return out;
}

Tensor stack_time(Tape& tape, const std::vector<Tensor>& frames) {
    require(!frames.empty(), "stack_time: no frames");
    const Shape& fs = frames[0].shape();
    require(fs.size() == 3, "stack_time: frames must be C×H×W");
    for (const auto& f : frames) require(f.shape() == fs, "stack_time: frame shape mismatch");
    const int c = fs[0], t = static_cast<int>(frames.size()), plane = fs[1] * fs[2];
    Tensor out = Tensor::zeros({c, t, fs[1], fs[2]});
    for (int ci = 0; ci < c; ++ci)
        for (int k = 0; k < t; ++k)
            std::memcpy(out.data() + (static_cast<std::size_t>(ci) * t + k) * plane,
                        frames[static_cast<std::size_t>(k)].data() +
                            static_cast<std::size_t>(ci) * plane,
                        static_cast<std::size_t>(plane) * sizeof(double));
    tape.record(frames, out, [frames, c, t, plane](GradMap& g, const std::vector<double>& og) mutable {
        for (int k = 0; k < t; ++k) {
            auto& df = grad_buf(g, frames[static_cast<std::size_t>(k)]);
            for (int ci = 0; ci < c; ++ci)
                for (int i = 0; i < plane; ++i)
                    df[static_cast<std::size_t>(ci) * plane + i] +=
                        og[(static_cast<std::size_t>(ci) * t + k) * plane + i];
        }
    });
    return out;
}

// ---- linear algebra ----------------------------------------------------------

Tensor fully_connected(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& b) {
    require(x.rank() == 1, "fully_connected: input must be a vector");
    require(w.rank() == 2 && w.dim(1) == x.dim(0),
            "fully_connected: weight " + shape_str(w.shape()) + " vs input " + shape_str(x.shape()));
    require(b.rank() == 1 && b.dim(0) == w.dim(0), "fully_connected: bias shape mismatch");
    const int m = w.dim(0), n = w.dim(1);
    Tensor out = Tensor::from({m}, b.values());
    cblas_dgemv(CblasRowMajor, CblasNoTrans, m, n, 1.0, w.data(), n, x.data(), 1, 1.0, out.data(),
                1);
    check_finite(out, "fully_connected");
    tape.record({x, w, b}, out, [x, w, b, m, n](GradMap& g, const std::vector<double>& og) mutable {
        auto& dx = grad_buf(g, x);
        auto& dw = grad_buf(g, w);
        auto& db = grad_buf(g, b);
        cblas_dgemv(CblasRowMajor, CblasTrans, m, n, 1.0, w.data(), n, og.data(), 1, 1.0,
                    dx.data(), 1);
        cblas_dger(CblasRowMajor, m, n, 1.0, og.data(), 1, x.data(), 1, dw.data(), n);
        for (int i = 0; i < m; ++i) db[static_cast<std::size_t>(i)] += og[static_cast<std::size_t>(i)];
    });
    return out;
}

Tensor matmul_nt(Tape& tape, const Tensor& x, const Tensor& y) {
    require(x.rank() == 2 && y.rank() == 2 && x.dim(1) == y.dim(1),
            "matmul_nt: " + shape_str(x.shape()) + " vs " + shape_str(y.shape()));
    const int m = x.dim(0), n = y.dim(0), k = x.dim(1);
    Tensor out = Tensor::zeros({m, n});
    dgemm(false, true, m, n, k, x.data(), y.data(), out.data());
    check_finite(out, "matmul_nt");
    tape.record({x, y}, out, [x, y, m, n, k](GradMap& g, const std::vector<double>& og) mutable {
        auto& dx = grad_buf(g, x);
        auto& dy = grad_buf(g, y);
        dgemm(false, false, m, k, n, og.data(), y.data(), dx.data(), 1.0, 1.0);
        dgemm(true, false, n, k, m, og.data(), x.data(), dy.data(), 1.0, 1.0);
    });
    return out;
}

// ---- convolutions -------------------------------------------------------------

namespace {

Tensor conv_nd(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& b, const ConvGeom& geom,
               Shape out_shape, const char* name) {
    const int co = out_shape[0];
    require(b.rank() == 1 && b.dim(0) == co, std::string(name) + ": bias shape mismatch");
    const int rows = geom.rows(), cols = geom.cols();
    std::vector<double> col(static_cast<std::size_t>(rows) * cols);
    im2col(x.data(), geom, col.data());

    Tensor out = Tensor::zeros(out_shape);
    for (int c = 0; c < co; ++c)
        std::fill_n(out.data() + static_cast<std::size_t>(c) * cols, cols, b.at(static_cast<std::size_t>(c)));
    dgemm(false, false, co, cols, rows, w.data(), col.data(), out.data(), 1.0, 1.0);
    check_finite(out, name);

    tape.record({x, w, b}, out,
                [x, w, b, geom, co, rows, cols](GradMap& g, const std::vector<double>& og) mutable {
                    auto& dx = grad_buf(g, x);
                    auto& dw = grad_buf(g, w);
                    auto& db = grad_buf(g, b);
                    // dW = dY · colᵀ (col recomputed; tapes are single-use)
                    std::vector<double> col(static_cast<std::size_t>(rows) * cols);
                    im2col(x.data(), geom, col.data());
                    dgemm(false, true, co, rows, cols, og.data(), col.data(), dw.data(), 1.0, 1.0);
                    // dcol = Wᵀ · dY ; dx = col2im(dcol)
                    dgemm(true, false, rows, cols, co, w.data(), og.data(), col.data(), 1.0, 0.0);
                    col2im_add(col.data(), geom, dx.data());
                    for (int c = 0; c < co; ++c) {
                        double s = 0.0;
                        for (int i = 0; i < cols; ++i)
                            s += og[static_cast<std::size_t>(c) * cols + i];
                        db[static_cast<std::size_t>(c)] += s;
                    }
                });
    return out;
}

}  // namespace

Tensor conv2d(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& b,
              std::array<int, 2> stride, std::array<int, 2> pad) {
    Shape out_shape = conv2d_out_shape(x.shape(), w.shape(), stride, pad);
    ConvGeom g{x.dim(0), 1,           x.dim(1), x.dim(2), 1,         w.dim(2), w.dim(3),
               1,        stride[0],   stride[1], 0,        pad[0],    pad[1],   1,
               out_shape[1], out_shape[2]};
    return conv_nd(tape, x, w, b, g, std::move(out_shape), "conv2d");
}

Tensor conv3d(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& b,
              std::array<int, 3> stride, std::array<int, 3> pad) {
    Shape out_shape = conv3d_out_shape(x.shape(), w.shape(), stride, pad);
    ConvGeom g{x.dim(0),  x.dim(1),  x.dim(2),  x.dim(3), w.dim(2),    w.dim(3),    w.dim(4),
               stride[0], stride[1], stride[2], pad[0],   pad[1],      pad[2],      out_shape[1],
               out_shape[2], out_shape[3]};
    return conv_nd(tape, x, w, b, g, std::move(out_shape), "conv3d");
}

Tensor conv_transpose2d(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& b,
                        std::array<int, 2> stride, std::array<int, 2> pad) {
    Shape out_shape = conv_transpose2d_out_shape(x.shape(), w.shape(), stride, pad);
    const int ci = x.dim(0);
    require(b.rank() == 1 && b.dim(0) == out_shape[0], "conv_transpose2d: bias shape mismatch");
    // Forward is the data-gradient of a conv whose input geometry is the output here.
    ConvGeom geom{out_shape[0], 1, out_shape[1], out_shape[2], 1,       w.dim(2), w.dim(3), 1,
                  stride[0],    stride[1],       0,            pad[0],  pad[1],   1,
                  x.dim(1),     x.dim(2)};
    const int rows = geom.rows(), cols = geom.cols();  // cols == Hin·Win
    std::vector<double> col(static_cast<std::size_t>(rows) * cols);
    // col = Wmᵀ · X, Wm: [Cin, Cout·kh·kw]
    dgemm(true, false, rows, cols, ci, w.data(), x.data(), col.data());
    Tensor out = Tensor::zeros(out_shape);
    const std::size_t plane = static_cast<std::size_t>(out_shape[1]) * out_shape[2];
    for (int c = 0; c < out_shape[0]; ++c)
        std::fill_n(out.data() + static_cast<std::size_t>(c) * plane, plane, b.at(static_cast<std::size_t>(c)));
    col2im_add(col.data(), geom, out.data());
    check_finite(out, "conv_transpose2d");

    tape.record({x, w, b}, out,
                [x, w, b, geom, ci, rows, cols, plane](GradMap& g, const std::vector<double>& og) mutable {
                    auto& dx = grad_buf(g, x);
                    auto& dw = grad_buf(g, w);
                    auto& db = grad_buf(g, b);
                    std::vector<double> col(static_cast<std::size_t>(rows) * cols);
                    im2col(og.data(), geom, col.data());
                    // dX = Wm · im2col(dY); dWm = X · im2col(dY)ᵀ
                    dgemm(false, false, ci, cols, rows, w.data(), col.data(), dx.data(), 1.0, 1.0);
                    dgemm(false, true, ci, rows, cols, x.data(), col.data(), dw.data(), 1.0, 1.0);
                    for (int c = 0; c < geom.ci; ++c) {
                        double s = 0.0;
                        for (std::size_t i = 0; i < plane; ++i)
                            s += og[static_cast<std::size_t>(c) * plane + i];
                        db[static_cast<std::size_t>(c)] += s;
                    }
                });
    return out;
}

Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gain, const Tensor& bias) {
    require(gain.size() == 1 && bias.size() == 1, "layer_norm: gain/bias must be scalars");
    const std::size_t n = x.size();
    require(n >= 2, "layer_norm: need at least two elements");
    constexpr double eps = 1e-6;
    double mean = 0;
    for (std::size_t i = 0; i < n; ++i) mean += x.at(i);
    mean /= static_cast<double>(n);
    double var = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = x.at(i) - mean;
        var += d * d;
    }
    var /= static_cast<double>(n);
    const double inv_sigma = 1.0 / std::sqrt(var + eps);
    const double g = gain.at(0), b = bias.at(0);
    Tensor out = Tensor::zeros(x.shape());
    std::vector<double> xhat(n);
    for (std::size_t i = 0; i < n; ++i) {
        xhat[i] = (x.at(i) - mean) * inv_sigma;
        out.at(i) = g * xhat[i] + b;
    }
    check_finite(out, "layer_norm");
    tape.record({x, gain, bias}, out,
                [x, gain, bias, xhat, inv_sigma, n](GradMap& gm, const std::vector<double>& og) mutable {
                    auto& dx = grad_buf(gm, x);
                    auto& dg = grad_buf(gm, gain);
                    auto& db = grad_buf(gm, bias);
                    const double g = gain.at(0);
                    double og_mean = 0, ogx_mean = 0;
                    for (std::size_t i = 0; i < n; ++i) {
                        og_mean += og[i];
                        ogx_mean += og[i] * xhat[i];
                    }
                    dg[0] += ogx_mean;
                    db[0] += og_mean;
                    og_mean /= static_cast<double>(n);
                    ogx_mean /= static_cast<double>(n);
                    for (std::size_t i = 0; i < n; ++i)
                        dx[i] += g * inv_sigma * (og[i] - og_mean - xhat[i] * ogx_mean);
                });
    return out;
}

Tensor maxpool3d(Tape& tape, const Tensor& x, std::array<int, 3> kernel,
                 std::array<int, 3> stride) {
    Shape out_shape = maxpool3d_out_shape(x.shape(), kernel, stride);
    const int c = x.dim(0), t = x.dim(1), h = x.dim(2), w = x.dim(3);
    const int to = out_shape[1], ho = out_shape[2], wo = out_shape[3];
    Tensor out = Tensor::zeros(out_shape);
    auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
    std::size_t o = 0;
    for (int ci = 0; ci < c; ++ci)
        for (int ot = 0; ot < to; ++ot)
            for (int oh = 0; oh < ho; ++oh)
                for (int ow = 0; ow < wo; ++ow, ++o) {
                    double best = -std::numeric_limits<double>::infinity();
                    std::size_t best_i = 0;
                    for (int dt = 0; dt < kernel[0]; ++dt)
                        for (int dh = 0; dh < kernel[1]; ++dh)
                            for (int dw = 0; dw < kernel[2]; ++dw) {
                                const std::size_t idx =
                                    ((static_cast<std::size_t>(ci) * t + ot * stride[0] + dt) * h +
                                     oh * stride[1] + dh) *
                                        w +
                                    ow * stride[2] + dw;
                                if (x.at(idx) > best) {  // strict: ties keep the lowest index
                                    best = x.at(idx);
                                    best_i = idx;
                                }
                            }
                    out.at(o) = best;
                    (*argmax)[o] = best_i;
                }
    tape.record({x}, out, [x, argmax](GradMap& g, const std::vector<double>& og) mutable {
        auto& dx = grad_buf(g, x);
        for (std::size_t i = 0; i < og.size(); ++i) dx[(*argmax)[i]] += og[i];
    });
    return out;
}

// ---- positional / circular ----------------------------------------------------

Tensor broadcast_add_columns(Tape& tape, const Tensor& x, const Tensor& emb, EmbedAxis axis) {
    require(x.rank() == 3, "broadcast_add_columns: input must be C×H×W");
    const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    if (axis == EmbedAxis::Vertical)
        require(emb.rank() == 2 && emb.dim(0) == c && emb.dim(1) == h,
                "broadcast_add_columns: vertical embedding must be C×H");
    else
        require(emb.rank() == 2 && emb.dim(0) == c && emb.dim(1) == w,
                "broadcast_add_columns: horizontal embedding must be C×W");
    Tensor out = Tensor::zeros(x.shape());
    for (int ci = 0; ci < c; ++ci)
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j) {
                const std::size_t idx = (static_cast<std::size_t>(ci) * h + i) * w + j;
                const double e = axis == EmbedAxis::Vertical
                                     ? emb.at(static_cast<std::size_t>(ci) * h + i)
                                     : emb.at(static_cast<std::size_t>(ci) * w + j);
                out.at(idx) = x.at(idx) + e;
            }
    check_finite(out, "broadcast_add_columns");
    tape.record({x, emb}, out, [x, emb, axis, c, h, w](GradMap& g, const std::vector<double>& og) mutable {
        auto& dx = grad_buf(g, x);
        auto& de = grad_buf(g, emb);
        for (std::size_t i = 0; i < og.size(); ++i) dx[i] += og[i];
        for (int ci = 0; ci < c; ++ci)
            for (int i = 0; i < h; ++i)
                for (int j = 0; j < w; ++j) {
                    const std::size_t idx = (static_cast<std::size_t>(ci) * h + i) * w + j;
                    if (axis == EmbedAxis::Vertical)
                        de[static_cast<std::size_t>(ci) * h + i] += og[idx];
                    else
                        de[static_cast<std::size_t>(ci) * w + j] += og[idx];
                }
    });
    return out;
}

Tensor circular_fc(Tape& tape, const Tensor& x, const Tensor& u, EmbedAxis axis) {
    require(x.rank() == 3, "circular_fc: input must be C×H×W");
    const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    const int span = axis == EmbedAxis::Vertical ? h : w;
    require(u.rank() == 2 && u.dim(0) == c && u.dim(1) == span,
            "circular_fc: weights must be C×" + std::to_string(span));
    Tensor out = Tensor::zeros(x.shape());
    for (int ci = 0; ci < c; ++ci) {
        const double* uc = u.data() + static_cast<std::size_t>(ci) * span;
        const double* xc = x.data() + static_cast<std::size_t>(ci) * h * w;
        double* oc = out.data() + static_cast<std::size_t>(ci) * h * w;
        if (axis == EmbedAxis::Vertical) {
            for (int i = 0; i < h; ++i)
                for (int s = 0; s < h; ++s) {
                    const double us = uc[s];
                    const double* src = xc + static_cast<std::size_t>((i + s) % h) * w;
                    double* dst = oc + static_cast<std::size_t>(i) * w;
                    for (int j = 0; j < w; ++j) dst[j] += us * src[j];
                }
        } else {
            for (int i = 0; i < h; ++i) {
                const double* src = xc + static_cast<std::size_t>(i) * w;
                double* dst = oc + static_cast<std::size_t>(i) * w;
                for (int j = 0; j < w; ++j) {
                    double acc = 0.0;
                    for (int s = 0; s < w; ++s) acc += uc[s] * src[(j + s) % w];
                    dst[j] = acc;
                }
            }
        }
    }
    check_finite(out, "circular_fc");
    tape.record({x, u}, out, [x, u, axis, c, h, w, span](GradMap& g, const std::vector<double>& og) mutable {
        auto& dx = grad_buf(g, x);
        auto& du = grad_buf(g, u);
        for (int ci = 0; ci < c; ++ci) {
            const double* uc = u.data() + static_cast<std::size_t>(ci) * span;
            const double* xc = x.data() + static_cast<std::size_t>(ci) * h * w;
            const double* gc = og.data() + static_cast<std::size_t>(ci) * h * w;
            double* dxc = dx.data() + static_cast<std::size_t>(ci) * h * w;
            double* duc = du.data() + static_cast<std::size_t>(ci) * span;
            if (axis == EmbedAxis::Vertical) {
                for (int s = 0; s < h; ++s) {
                    double acc = 0.0;
                    for (int i = 0; i < h; ++i) {
                        const double* gro = gc + static_cast<std::size_t>(i) * w;
                        const double* xro = xc + static_cast<std::size_t>((i + s) % h) * w;
                        double* dxro = dxc + static_cast<std::size_t>((i + s) % h) * w;
                        const double us = uc[s];
                        for (int j = 0; j < w; ++j) {
                            acc += gro[j] * xro[j];
                            dxro[j] += us * gro[j];
                        }
                    }
                    duc[s] += acc;
                }
            } else {
                for (int s = 0; s < w; ++s) {
                    double acc = 0.0;
                    const double us = uc[s];
                    for (int i = 0; i < h; ++i) {
                        const double* gro = gc + static_cast<std::size_t>(i) * w;
                        const double* xro = xc + static_cast<std::size_t>(i) * w;
                        double* dxro = dxc + static_cast<std::size_t>(i) * w;
                        for (int j = 0; j < w; ++j) {
                            acc += gro[j] * xro[(j + s) % w];
                            dxro[(j + s) % w] += us * gro[j];
                        }
                    }
                    duc[s] += acc;
                }
            }
        }
    });
    return out;
}

// ---- losses ---------------------------------------------------------------------

Tensor softmax_ce(Tape& tape, const Tensor& logits, int label) {
    require(logits.rank() == 1 && logits.dim(0) >= 2, "softmax_ce: logits must be a vector of n>=2");
    const int n = logits.dim(0);
    if (label < 0 || label >= n)
        throw ConfigError("softmax_ce: label " + std::to_string(label) + " out of range [0," +
                          std::to_string(n) + ")");
    const auto probs = softmax(logits);
    const double loss = -std::log(std::max(probs[static_cast<std::size_t>(label)], 1e-300));
    Tensor out = Tensor::from({1}, {loss});
    check_finite(out, "softmax_ce");
    tape.record({logits}, out, [logits, probs, label](GradMap& g, const std::vector<double>& og) mutable {
        auto& dl = grad_buf(g, logits);
        for (std::size_t i = 0; i < dl.size(); ++i)
            dl[i] += og[0] * (probs[i] - (static_cast<int>(i) == label ? 1.0 : 0.0));
    });
    return out;
}

std::vector<double> softmax(const Tensor& logits) {
    const double m = *std::max_element(logits.values().begin(), logits.values().end());
    std::vector<double> p(logits.size());
    double z = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        p[i] = std::exp(logits.at(i) - m);
        z += p[i];
    }
    for (auto& v : p) v /= z;
    return p;
}

Tensor mse_loss(Tape& tape, const Tensor& pred, const Tensor& target) {
    require(pred.shape() == target.shape(), "mse_loss: shape mismatch");
    const double inv_n = 1.0 / static_cast<double>(pred.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred.at(i) - target.at(i);
        acc += d * d;
    }
    Tensor out = Tensor::from({1}, {acc * inv_n});
    check_finite(out, "mse_loss");
    tape.record({pred}, out, [pred, target, inv_n](GradMap& g, const std::vector<double>& og) mutable {
        auto& dp = grad_buf(g, pred);
        for (std::size_t i = 0; i < dp.size(); ++i)
            dp[i] += og[0] * 2.0 * inv_n * (pred.at(i) - target.at(i));
    });
    return out;
}

Tensor normalized_l1(Tape& tape, const Tensor& pred, const Tensor& target, double denom) {
    require(pred.shape() == target.shape(), "normalized_l1: shape mismatch");
    if (!(denom > 0.0)) throw ConfigError("normalized_l1: non-positive normalizer");
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) acc += std::abs(pred.at(i) - target.at(i));
    Tensor out = Tensor::from({1}, {acc / denom});
    check_finite(out, "normalized_l1");
    tape.record({pred}, out, [pred, target, denom](GradMap& g, const std::vector<double>& og) mutable {
        auto& dp = grad_buf(g, pred);
        for (std::size_t i = 0; i < dp.size(); ++i) {
            const double d = pred.at(i) - target.at(i);
            if (d != 0.0) dp[i] += og[0] * (d > 0.0 ? 1.0 : -1.0) / denom;
        }
    });
    return out;
}

// ---- sampling ---------------------------------------------------------------------

Tensor bilinear_sample(const Tensor& image, const Tensor& u, const Tensor& v) {
    require(image.rank() == 3, "bilinear_sample: image must be C×H×W");
    const int c = image.dim(0), h = image.dim(1), w = image.dim(2);
    require(u.rank() == 2 && u.dim(0) == h && u.dim(1) == w, "bilinear_sample: u must be H×W");
    require(v.shape() == u.shape(), "bilinear_sample: v must match u");
    Tensor out = Tensor::zeros(image.shape());
    auto clampd = [](double x, double lo, double hi) { return std::min(std::max(x, lo), hi); };
    for (int a = 0; a < h; ++a)
        for (int b = 0; b < w; ++b) {
            const std::size_t p = static_cast<std::size_t>(a) * w + b;
            const double row = clampd(a + v.at(p), 0.0, h - 1.0);
            const double col = clampd(b + u.at(p), 0.0, w - 1.0);
            const int r0 = static_cast<int>(std::floor(row));
            const int c0 = static_cast<int>(std::floor(col));
            const int r1 = std::min(r0 + 1, h - 1), c1 = std::min(c0 + 1, w - 1);
            const double fr = row - r0, fc = col - c0;
            for (int ci = 0; ci < c; ++ci) {
                const double* im = image.data() + static_cast<std::size_t>(ci) * h * w;
                const double val = (1 - fr) * ((1 - fc) * im[r0 * w + c0] + fc * im[r0 * w + c1]) +
                                   fr * ((1 - fc) * im[r1 * w + c0] + fc * im[r1 * w + c1]);
                out.at(static_cast<std::size_t>(ci) * h * w + p) = val;
            }
        }
    return out;
}

}  // namespace menet
