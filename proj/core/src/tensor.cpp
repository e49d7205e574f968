#include "menet/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace menet {

std::size_t numel(const Shape& shape) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw DimensionError("non-positive dimension in shape " + shape_str(shape));
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << ")";
    return os.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    auto d = std::make_shared<TensorData>();
    d->values.assign(numel(shape), 0.0);
    d->shape = std::move(shape);
    d->requires_grad = requires_grad;
    return Tensor(std::move(d));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    Tensor t = zeros(std::move(shape), requires_grad);
    std::fill(t.values().begin(), t.values().end(), value);
    return t;
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
    if (numel(shape) != values.size())
        throw DimensionError("value count " + std::to_string(values.size()) +
                             " does not match shape " + shape_str(shape));
    auto d = std::make_shared<TensorData>();
    d->shape = std::move(shape);
    d->values = std::move(values);
    d->requires_grad = requires_grad;
    return Tensor(std::move(d));
}

Tensor Tensor::clone() const {
    auto d = std::make_shared<TensorData>(*d_);
    return Tensor(std::move(d));
}

double Tensor::scalar() const {
    if (size() != 1) throw DimensionError("scalar() on tensor of shape " + shape_str(shape()));
    return d_->values[0];
}

std::vector<double>& Tensor::grad_vec() {
    if (d_->grad.empty()) d_->grad.assign(d_->values.size(), 0.0);
    return d_->grad;
}

void Tensor::zero_grad() {
    std::fill(d_->grad.begin(), d_->grad.end(), 0.0);
}

bool all_finite(const Tensor& t) {
    for (double v : t.values())
        if (!std::isfinite(v)) return false;
    return true;
}

std::vector<double>& grad_buf(GradMap& g, const Tensor& t) {
    auto& buf = g[t.node()];
    if (buf.empty()) buf.assign(t.size(), 0.0);
    return buf;
}

void Tape::record(std::vector<Tensor> inputs, Tensor output, BackwardRule rule) {
    entries_.push_back(Entry{std::move(inputs), std::move(output), std::move(rule)});
}

void Tape::backward(const Tensor& loss, GradMap* sink) {
    if (consumed_) throw std::logic_error("backward() called twice on the same tape");
    if (loss.size() != 1) throw DimensionError("backward() requires a scalar loss");
    consumed_ = true;

    GradMap grads;
    grads[loss.node()] = {1.0};

    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
        auto found = grads.find(it->output.node());
        if (found == grads.end()) continue;  // not on the path to the loss
        it->rule(grads, found->second);
    }

    // Flush into parameter .grad buffers (or the external sink) in recording
    // order so accumulation order is reproducible.
    std::unordered_set<TensorData*> flushed;
    auto flush = [&](Tensor& t) {
        TensorData* n = t.node();
        if (!n->requires_grad || flushed.count(n)) return;
        auto found = grads.find(n);
        if (found == grads.end()) return;  // disconnected: grad stays as-is
        flushed.insert(n);
        if (sink) {
            auto& dst = (*sink)[n];
            if (dst.empty()) dst.assign(t.size(), 0.0);
            for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += found->second[i];
        } else {
            auto& dst = t.grad_vec();
            for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += found->second[i];
        }
    };
    for (auto& e : entries_) {
        for (auto& in : e.inputs) flush(in);
        flush(e.output);
    }
    if (loss.node()->requires_grad && !flushed.count(loss.node())) {
        Tensor l = loss;
        flush(l);
    }
}

}  // namespace menet
