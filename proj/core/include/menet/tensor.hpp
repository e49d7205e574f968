#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace menet {

using Shape = std::vector<int>;

// Thrown when operand shapes are inconsistent.
struct DimensionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Thrown when a hyperparameter combination is invalid (e.g. non-positive
// convolution output size).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Thrown by file readers on malformed input.
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct TensorData {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;  // empty until a backward pass touches it
    bool requires_grad = false;
};

// Dense row-major tensor of doubles. Copying a Tensor aliases the underlying
// buffer; use clone() for a deep copy.
class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<TensorData> d) : d_(std::move(d)) {}

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);

    Tensor clone() const;

    bool defined() const { return static_cast<bool>(d_); }
    const Shape& shape() const { return d_->shape; }
    int dim(int i) const { return d_->shape.at(static_cast<std::size_t>(i)); }
    int rank() const { return static_cast<int>(d_->shape.size()); }
    std::size_t size() const { return d_->values.size(); }

    double* data() { return d_->values.data(); }
    const double* data() const { return d_->values.data(); }
    std::vector<double>& values() { return d_->values; }
    const std::vector<double>& values() const { return d_->values; }
    double& at(std::size_t i) { return d_->values[i]; }
    double at(std::size_t i) const { return d_->values[i]; }

    // Value of a one-element tensor.
    double scalar() const;

    bool requires_grad() const { return d_->requires_grad; }
    void set_requires_grad(bool v) { d_->requires_grad = v; }

    // Gradient buffer; allocated zero-filled on first access via grad_vec().
    std::vector<double>& grad_vec();
    const std::vector<double>* grad() const { return d_->grad.empty() ? nullptr : &d_->grad; }
    void zero_grad();

    TensorData* node() const { return d_.get(); }
    std::shared_ptr<TensorData> handle() const { return d_; }

  private:
    std::shared_ptr<TensorData> d_;
};

bool all_finite(const Tensor& t);

// Gradient buffers keyed by tensor identity, as produced by one backward
// traversal. Used directly for per-worker gradient isolation.
using GradMap = std::unordered_map<TensorData*, std::vector<double>>;

// Returns the buffer for t inside g, zero-initialized at t's size.
std::vector<double>& grad_buf(GradMap& g, const Tensor& t);

// Records primitive applications in execution order and replays their
// backward rules in reverse. A tape is single-use: backward() marks it
// consumed and a second call throws.
class Tape {
  public:
    using BackwardRule = std::function<void(GradMap&, const std::vector<double>& out_grad)>;

    void record(std::vector<Tensor> inputs, Tensor output, BackwardRule rule);

    // Seeds d(loss)/d(loss) = 1 and accumulates gradients. With sink == nullptr
    // gradients of requires_grad tensors are added into their .grad buffers;
    // otherwise they are added into *sink and the tensors are untouched.
    void backward(const Tensor& loss, GradMap* sink = nullptr);

    bool consumed() const { return consumed_; }
    std::size_t size() const { return entries_.size(); }

  private:
    struct Entry {
        std::vector<Tensor> inputs;
        Tensor output;
        BackwardRule rule;
    };
    std::vector<Entry> entries_;
    bool consumed_ = false;
};

}  // namespace menet
