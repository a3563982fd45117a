#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace tinyvlm {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Reference-counted storage behind the value-semantic Tensor handle.
// grad is allocated lazily and only ever touched when requires_grad is set.
struct TensorImpl {
    Shape shape;
    std::vector<double> data;
    bool requires_grad = false;
    std::vector<double> grad;

    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
    std::vector<double>& ensure_grad();
    void accum_grad(const std::vector<double>& g);
};

class Tensor {
public:
    Tensor() = default;

    static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor ones(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);
    static Tensor randn(Shape shape, std::mt19937_64& rng, double stddev = 1.0, double mean = 0.0,
                        bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const;
    int rank() const { return static_cast<int>(shape().size()); }
    std::int64_t extent(int axis) const;
    std::int64_t numel() const;

    bool requires_grad() const;
    void set_requires_grad(bool value);

    std::vector<double>& data();
    const std::vector<double>& data() const;

    bool has_grad() const;
    const std::vector<double>& grad() const;
    void zero_grad();

    double item() const;
    double at(std::int64_t i) const;
    double at(std::int64_t i, std::int64_t j) const;
    double at(std::int64_t i, std::int64_t j, std::int64_t k) const;
    void set(std::int64_t i, double v);
    void set(std::int64_t i, std::int64_t j, double v);

    // Detached deep copy (no grad, no tape linkage).
    Tensor clone() const;

    std::shared_ptr<TensorImpl> impl() const { return impl_; }

private:
    explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
    std::shared_ptr<TensorImpl> impl_;
};

// Ordered record of executed primitives for one training step. Constructing a
// Tape makes it the thread's active tape; destruction restores the previous
// one. backward() walks the records exactly once, in reverse execution order.
class Tape {
public:
    Tape();
    ~Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    void record(std::function<void()> fn);
    std::size_t size() const { return records_.size(); }

    void backward(const Tensor& loss);

    static Tape* active();

private:
    std::vector<std::function<void()>> records_;
    Tape* previous_ = nullptr;
};

// ---- primitives ----

Tensor add(const Tensor& a, const Tensor& b);
Tensor add_bias(const Tensor& x, const Tensor& bias);   // broadcast over last axis
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape new_shape);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& a, int axis, std::int64_t begin, std::int64_t end);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

Tensor silu(const Tensor& x);
Tensor gelu(const Tensor& x);
Tensor mish(const Tensor& x);
Tensor softmax(const Tensor& x, int axis);
Tensor rms_norm(const Tensor& x, const Tensor& weight, double eps);
Tensor causal_mask_fill(const Tensor& scores);
Tensor embedding_lookup(const Tensor& table, const std::vector<std::int64_t>& ids);
Tensor rope(const Tensor& x, int num_heads, double base);

Tensor cross_entropy_masked(const Tensor& logits, const std::vector<std::int64_t>& targets,
                            const std::vector<bool>& mask);

Tensor depthwise_conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, int stride, int padding);
Tensor pointwise_conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias);
Tensor average_pool2d(const Tensor& x, int pool_h, int pool_w);

// XDP token merge: concatenate each pool_h x pool_w window of a row-major
// grid_side x grid_side token grid into one row of size C*pool_h*pool_w.
Tensor window_merge(const Tensor& tokens, std::int64_t grid_side, std::int64_t pool_h, std::int64_t pool_w);

// Multi-head scaled-dot-product attention over [L x D] projections, heads
// laid out contiguously along the feature axis. causal applies the strictly
// lower-triangular mask before the row softmax.
Tensor multihead_attention(const Tensor& q, const Tensor& k, const Tensor& v, int num_heads, bool causal);

// x @ w + b (composite of matmul and add_bias).
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

// Numerically safe softplus, shared by mish and tests.
double softplus(double x);

}  // namespace tinyvlm
