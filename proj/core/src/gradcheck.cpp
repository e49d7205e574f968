#include "menet/gradcheck.hpp"

#include <cmath>
#include <limits>

namespace menet {

Tensor random_uniform(Shape shape, Rng& rng, double lo, double hi, bool requires_grad) {
    std::uniform_real_distribution<double> dist(lo, hi);
    Tensor t = Tensor::zeros(std::move(shape), requires_grad);
    for (std::size_t i = 0; i < t.size(); ++i) t.at(i) = dist(rng);
    return t;
}

Tensor fan_in_uniform(Shape shape, int fan_in, Rng& rng, bool requires_grad) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    return random_uniform(std::move(shape), rng, -bound, bound, requires_grad);
}

GradCheckReport grad_check(const ScalarFn& fn, std::vector<Tensor> inputs, double h,
                           double floor) {
    for (auto& t : inputs) t.set_requires_grad(true);

    std::vector<std::vector<double>> analytic;
    {
        Tape tape;
        Tensor loss = fn(tape, inputs);
        GradMap grads;
        tape.backward(loss, &grads);
        for (auto& t : inputs) {
            auto it = grads.find(t.node());
            analytic.push_back(it != grads.end() ? it->second
                                                 : std::vector<double>(t.size(), 0.0));
        }
    }

    auto eval = [&]() {
        Tape tape;
        return fn(tape, inputs).scalar();
    };

    GradCheckReport report;
    for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
        Tensor& t = inputs[ti];
        for (std::size_t j = 0; j < t.size(); ++j) {
            const double saved = t.at(j);
            t.at(j) = saved + h;
            const double fp = eval();
            t.at(j) = saved - h;
            const double fm = eval();
            t.at(j) = saved;
            const double numeric = (fp - fm) / (2.0 * h);
            const double a = analytic[ti][j];
            const double denom = std::max({std::abs(a), std::abs(numeric), floor});
            const double rel = std::abs(a - numeric) / denom;
            if (rel > report.max_rel_error) {
                report.max_rel_error = rel;
                report.worst =
                    "input " + std::to_string(ti) + " element " + std::to_string(j);
            }
        }
    }
    return report;
}

GradCheckReport grad_check_resampled(const ScalarFn& fn,
                                     const std::function<std::vector<Tensor>(Rng&)>& make_inputs,
                                     Rng& rng, double tol, int attempts, double h) {
    GradCheckReport best;
    best.max_rel_error = std::numeric_limits<double>::infinity();
    for (int a = 0; a < attempts; ++a) {
        GradCheckReport r = grad_check(fn, make_inputs(rng), h);
        if (r.max_rel_error < best.max_rel_error) best = r;
        if (best.passed(tol)) break;
    }
    return best;
}

}  // namespace menet
