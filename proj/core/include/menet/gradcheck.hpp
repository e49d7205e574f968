#pragma once

#include <functional>
#include <random>
#include <string>

#include "menet/tensor.hpp"

namespace menet {

using Rng = std::mt19937_64;

Tensor random_uniform(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0,
                      bool requires_grad = false);

// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
Tensor fan_in_uniform(Shape shape, int fan_in, Rng& rng, bool requires_grad = true);

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::string worst;  // "input <i> element <j>"
    bool passed(double tol) const { return max_rel_error <= tol; }
};

// Scalar-valued function of the inputs, evaluated on a fresh tape per call.
using ScalarFn = std::function<Tensor(Tape&, std::vector<Tensor>&)>;

// Central finite differences with step h against the tape's analytic
// gradients. Relative error uses an absolute floor so near-zero gradients
// are compared absolutely.
GradCheckReport grad_check(const ScalarFn& fn, std::vector<Tensor> inputs, double h = 1e-5,
                           double floor = 1e-2);

// Runs grad_check up to `attempts` times with inputs drawn by `make_inputs`,
// keeping the best report. Used for ops with kinks (ReLU, max) where a
// sample may land within the finite-difference step of a non-smooth point.
GradCheckReport grad_check_resampled(const ScalarFn& fn,
                                     const std::function<std::vector<Tensor>(Rng&)>& make_inputs,
                                     Rng& rng, double tol, int attempts = 5, double h = 1e-5);

}  // namespace menet
