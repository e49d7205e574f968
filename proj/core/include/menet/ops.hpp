#pragma once

#include <array>

#include "menet/tensor.hpp"

namespace menet {

// When enabled (default), every primitive verifies its output is free of
// NaN/Inf and throws std::overflow_error otherwise.
void set_finite_checks(bool enabled);
bool finite_checks_enabled();

// ---- shape inference -------------------------------------------------------
// These are the single source of truth for output geometry; the ops below
// call them, and pipeline-level shape reports reuse them.

int conv_out_dim(int in, int k, int stride, int pad);
int conv_transpose_out_dim(int in, int k, int stride, int pad);
Shape conv2d_out_shape(const Shape& x, const Shape& w, std::array<int, 2> stride,
                       std::array<int, 2> pad);
Shape conv3d_out_shape(const Shape& x, const Shape& w, std::array<int, 3> stride,
                       std::array<int, 3> pad);
Shape conv_transpose2d_out_shape(const Shape& x, const Shape& w, std::array<int, 2> stride,
                                 std::array<int, 2> pad);
Shape maxpool3d_out_shape(const Shape& x, std::array<int, 3> kernel, std::array<int, 3> stride);

// ---- elementwise / structural ---------------------------------------------

Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& a, double factor);
Tensor relu(Tape& tape, const Tensor& a);
Tensor concat(Tape& tape, const std::vector<Tensor>& parts, int axis);
Tensor reshape(Tape& tape, const Tensor& a, Shape shape);
Tensor sum(Tape& tape, const Tensor& a);

// Stacks per-frame C×H×W tensors into C×T×H×W (time axis inserted after
// channels, matching the 3D convolution layout).
Tensor stack_time(Tape& tape, const std::vector<Tensor>& frames);

// ---- linear algebra --------------------------------------------------------

// x: [in] vector, w: [out, in], b: [out] -> [out]
Tensor fully_connected(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& b);

// X: [m, k], Y: [n, k] -> X · Yᵀ : [m, n]
Tensor matmul_nt(Tape& tape, const Tensor& x, const Tensor& y);

// ---- convolutions ----------------------------------------------------------

Tensor conv2d(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& b,
              std::array<int, 2> stride, std::array<int, 2> pad);
Tensor conv3d(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& b,
              std::array<int, 3> stride, std::array<int, 3> pad);
// w layout: [C_in, C_out, kh, kw]
Tensor conv_transpose2d(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& b,
                        std::array<int, 2> stride, std::array<int, 2> pad);
// Gradient of max routes to the lowest linear index among tied maxima.
// Whole-tensor normalization y = gain·(x − mean)/sqrt(var + 1e-6) + bias with
// scalar gain/bias. Keeps head inputs well-scaled regardless of upstream
// feature magnitude.
Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gain, const Tensor& bias);

Tensor maxpool3d(Tape& tape, const Tensor& x, std::array<int, 3> kernel,
                 std::array<int, 3> stride);

// ---- positional / circular -------------------------------------------------

enum class EmbedAxis { Vertical, Horizontal };

// Vertical: emb is C×H, replicated across W. Horizontal: emb is C×W,
// replicated across H. Gradient to emb sums over the replicated axis.
Tensor broadcast_add_columns(Tape& tape, const Tensor& x, const Tensor& emb, EmbedAxis axis);

// Vertical: y(c,i,j) = Σ_s u(c,s) · x(c, (i+s) mod H, j), u: C×H.
// Horizontal: same along the width axis with modulus W, u: C×W.
Tensor circular_fc(Tape& tape, const Tensor& x, const Tensor& u, EmbedAxis axis);

// ---- losses (scalar outputs) -----------------------------------------------

// Numerically stabilized softmax + cross entropy against a one-hot label.
Tensor softmax_ce(Tape& tape, const Tensor& logits, int label);
// Softmax probabilities of a logit vector (no tape; inference-side helper).
std::vector<double> softmax(const Tensor& logits);
// Mean over all elements of (pred - target)²; target is a constant.
Tensor mse_loss(Tape& tape, const Tensor& pred, const Tensor& target);
// Σ |pred - target| / denom; target constant, denom > 0.
Tensor normalized_l1(Tape& tape, const Tensor& pred, const Tensor& target, double denom);

// ---- sampling (no gradient support) -----------------------------------------

// out(c,a,b) = image(c, a + v(a,b), b + u(a,b)) with bilinear interpolation;
// sample coordinates clamp to the image border.
Tensor bilinear_sample(const Tensor& image, const Tensor& u, const Tensor& v);

}  // namespace menet
