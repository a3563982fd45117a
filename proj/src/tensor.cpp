#include "tinyvlm/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace tinyvlm {

std::int64_t shape_numel(const Shape& shape) {
    std::int64_t n = 1;
    for (auto e : shape) n *= e;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << " x ";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

std::vector<double>& TensorImpl::ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    return grad;
}

void TensorImpl::accum_grad(const std::vector<double>& g) {
    if (!requires_grad) return;
    if (g.size() != data.size()) throw std::runtime_error("gradient size mismatch");
    auto& dst = ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
}

// ==================== Tensor ====================

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
    for (auto e : shape) {
        if (e < 0) throw std::invalid_argument("negative extent in shape " + shape_str(shape));
    }
    if (shape_numel(shape) != static_cast<std::int64_t>(data.size())) {
        throw std::invalid_argument("data length " + std::to_string(data.size()) +
                                    " does not match shape " + shape_str(shape));
    }
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(data);
    impl->requires_grad = requires_grad;
    return Tensor(std::move(impl));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    auto n = shape_numel(shape);
    return from_data(std::move(shape), std::vector<double>(static_cast<std::size_t>(n), 0.0), requires_grad);
}

Tensor Tensor::ones(Shape shape, bool requires_grad) {
    auto n = shape_numel(shape);
    return from_data(std::move(shape), std::vector<double>(static_cast<std::size_t>(n), 1.0), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    auto n = shape_numel(shape);
    return from_data(std::move(shape), std::vector<double>(static_cast<std::size_t>(n), value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return from_data(Shape{}, std::vector<double>{value}, requires_grad);
}

Tensor Tensor::randn(Shape shape, std::mt19937_64& rng, double stddev, double mean, bool requires_grad) {
    auto n = shape_numel(shape);
    std::normal_distribution<double> dist(mean, stddev);
    std::vector<double> d(static_cast<std::size_t>(n));
    for (auto& v : d) v = dist(rng);
    return from_data(std::move(shape), std::move(d), requires_grad);
}

static TensorImpl& deref(const std::shared_ptr<TensorImpl>& p) {
    if (!p) throw std::runtime_error("use of undefined tensor");
    return *p;
}

const Shape& Tensor::shape() const { return deref(impl_).shape; }

std::int64_t Tensor::extent(int axis) const {
    const auto& s = shape();
    if (axis < 0 || axis >= static_cast<int>(s.size()))
        throw std::invalid_argument("axis " + std::to_string(axis) + " out of range for " + shape_str(s));
    return s[static_cast<std::size_t>(axis)];
}

std::int64_t Tensor::numel() const { return deref(impl_).numel(); }

bool Tensor::requires_grad() const { return deref(impl_).requires_grad; }

void Tensor::set_requires_grad(bool value) {
    auto& impl = deref(impl_);
    impl.requires_grad = value;
    if (!value) impl.grad.clear();
}

std::vector<double>& Tensor::data() { return deref(impl_).data; }
const std::vector<double>& Tensor::data() const { return deref(impl_).data; }

bool Tensor::has_grad() const { return defined() && !impl_->grad.empty(); }

const std::vector<double>& Tensor::grad() const {
    auto& impl = deref(impl_);
    if (impl.grad.empty()) throw std::runtime_error("gradient not populated; run backward first");
    return impl.grad;
}

void Tensor::zero_grad() {
    auto& impl = deref(impl_);
    std::fill(impl.grad.begin(), impl.grad.end(), 0.0);
}

double Tensor::item() const {
    auto& impl = deref(impl_);
    if (impl.numel() != 1) throw std::runtime_error("item() requires a one-element tensor, got " + shape_str(impl.shape));
    return impl.data[0];
}

double Tensor::at(std::int64_t i) const { return data().at(static_cast<std::size_t>(i)); }

double Tensor::at(std::int64_t i, std::int64_t j) const {
    const auto& s = shape();
    if (s.size() != 2) throw std::invalid_argument("at(i,j) requires rank 2, got " + shape_str(s));
    return data().at(static_cast<std::size_t>(i * s[1] + j));
}

double Tensor::at(std::int64_t i, std::int64_t j, std::int64_t k) const {
    const auto& s = shape();
    if (s.size() != 3) throw std::invalid_argument("at(i,j,k) requires rank 3, got " + shape_str(s));
    return data().at(static_cast<std::size_t>((i * s[1] + j) * s[2] + k));
}

void Tensor::set(std::int64_t i, double v) { data().at(static_cast<std::size_t>(i)) = v; }

void Tensor::set(std::int64_t i, std::int64_t j, double v) {
    const auto& s = shape();
    if (s.size() != 2) throw std::invalid_argument("set(i,j) requires rank 2, got " + shape_str(s));
    data().at(static_cast<std::size_t>(i * s[1] + j)) = v;
}

Tensor Tensor::clone() const { return from_data(shape(), data(), false); }

// ==================== Tape ====================

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tape::Tape() : previous_(g_active_tape) { g_active_tape = this; }

Tape::~Tape() { g_active_tape = previous_; }

Tape* Tape::active() { return g_active_tape; }

void Tape::record(std::function<void()> fn) { records_.push_back(std::move(fn)); }

void Tape::backward(const Tensor& loss) {
    if (!loss.defined() || loss.numel() != 1)
        throw std::invalid_argument("backward requires a scalar loss, got " +
                                    (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
    if (!loss.requires_grad())
        throw std::invalid_argument("backward: loss is not connected to the tape");
    loss.impl()->ensure_grad()[0] += 1.0;
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) (*it)();
}

// ==================== op helpers ====================

namespace {

// Wires the output into the active tape. The closure must read out->grad and
// accumulate into the inputs; it is only invoked when out has a grad buffer.
Tensor finish_op(Tensor out, bool any_input_grad, std::function<void()> backward_fn) {
    Tape* tape = Tape::active();
    if (tape != nullptr && any_input_grad) {
        out.set_requires_grad(true);
        tape->record(std::move(backward_fn));
    }
    return out;
}

bool grad_ready(const std::shared_ptr<TensorImpl>& out) { return !out->grad.empty(); }

}  // namespace

// ==================== basic primitives ====================

Tensor add(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw std::invalid_argument("add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    std::vector<double> d(a.data().size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = a.data()[i] + b.data()[i];
    Tensor out = Tensor::from_data(a.shape(), std::move(d));
    auto ai = a.impl(), bi = b.impl(), oi = out.impl();
    return finish_op(out, a.requires_grad() || b.requires_grad(), [ai, bi, oi]() {
        if (!grad_ready(oi)) return;
        if (ai->requires_grad) ai->accum_grad(oi->grad);
        if (bi->requires_grad) bi->accum_grad(oi->grad);
    });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
    if (bias.rank() != 1)
        throw std::invalid_argument("add_bias: bias must be rank 1, got " + shape_str(bias.shape()));
    if (x.rank() < 1 || x.shape().back() != bias.extent(0))
        throw std::invalid_argument("add_bias: last extent of " + shape_str(x.shape()) + " must equal " +
                                    shape_str(bias.shape()));
    const std::int64_t d = bias.extent(0);
    const std::int64_t rows = x.numel() / d;
    std::vector<double> out_data(x.data().size());
    for (std::int64_t r = 0; r < rows; ++r)
        for (std::int64_t c = 0; c < d; ++c)
            out_data[static_cast<std::size_t>(r * d + c)] =
                x.data()[static_cast<std::size_t>(r * d + c)] + bias.data()[static_cast<std::size_t>(c)];
    Tensor out = Tensor::from_data(x.shape(), std::move(out_data));
    auto xi = x.impl(), bi = bias.impl(), oi = out.impl();
    return finish_op(out, x.requires_grad() || bias.requires_grad(), [xi, bi, oi, rows, d]() {
        if (!grad_ready(oi)) return;
        if (xi->requires_grad) xi->accum_grad(oi->grad);
        if (bi->requires_grad) {
            auto& gb = bi->ensure_grad();
            for (std::int64_t r = 0; r < rows; ++r)
                for (std::int64_t c = 0; c < d; ++c)
                    gb[static_cast<std::size_t>(c)] += oi->grad[static_cast<std::size_t>(r * d + c)];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw std::invalid_argument("mul: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    std::vector<double> d(a.data().size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = a.data()[i] * b.data()[i];
    Tensor out = Tensor::from_data(a.shape(), std::move(d));
    auto ai = a.impl(), bi = b.impl(), oi = out.impl();
    return finish_op(out, a.requires_grad() || b.requires_grad(), [ai, bi, oi]() {
        if (!grad_ready(oi)) return;
        if (ai->requires_grad) {
            auto& ga = ai->ensure_grad();
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += bi->data[i] * oi->grad[i];
        }
        if (bi->requires_grad) {
            auto& gb = bi->ensure_grad();
            for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += ai->data[i] * oi->grad[i];
        }
    });
}

Tensor scale(const Tensor& a, double c) {
    std::vector<double> d(a.data().size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = a.data()[i] * c;
    Tensor out = Tensor::from_data(a.shape(), std::move(d));
    auto ai = a.impl(), oi = out.impl();
    return finish_op(out, a.requires_grad(), [ai, oi, c]() {
        if (!grad_ready(oi) || !ai->requires_grad) return;
        auto& ga = ai->ensure_grad();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += c * oi->grad[i];
    });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2)
        throw std::invalid_argument("matmul: rank-2 operands required, got " + shape_str(a.shape()) + " and " +
                                    shape_str(b.shape()));
    const std::int64_t m = a.extent(0), k = a.extent(1), k2 = b.extent(0), n = b.extent(1);
    if (k != k2)
        throw std::invalid_argument("matmul: inner dimensions disagree: " + shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
    std::vector<double> c(static_cast<std::size_t>(m * n), 0.0);
    const double* ad = a.data().data();
    const double* bd = b.data().data();
    for (std::int64_t i = 0; i < m; ++i) {
        double* crow = c.data() + i * n;
        for (std::int64_t p = 0; p < k; ++p) {
            const double av = ad[i * k + p];
            const double* brow = bd + p * n;
            for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
    Tensor out = Tensor::from_data({m, n}, std::move(c));
    auto ai = a.impl(), bi = b.impl(), oi = out.impl();
    return finish_op(out, a.requires_grad() || b.requires_grad(), [ai, bi, oi, m, k, n]() {
        if (!grad_ready(oi)) return;
        const double* gd = oi->grad.data();
        if (ai->requires_grad) {
            // dA = dC * B^T
            auto& ga = ai->ensure_grad();
            const double* bd = bi->data.data();
            for (std::int64_t i = 0; i < m; ++i)
                for (std::int64_t j = 0; j < n; ++j) {
                    const double g = gd[i * n + j];
                    if (g == 0.0) continue;
                    for (std::int64_t p = 0; p < k; ++p) ga[static_cast<std::size_t>(i * k + p)] += g * bd[p * n + j];
                }
        }
        if (bi->requires_grad) {
            // dB = A^T * dC
            auto& gb = bi->ensure_grad();
            const double* ad = ai->data.data();
            for (std::int64_t i = 0; i < m; ++i) {
                const double* arow = ad + i * k;
                const double* grow = gd + i * n;
                for (std::int64_t p = 0; p < k; ++p) {
                    const double av = arow[p];
                    if (av == 0.0) continue;
                    double* gbrow = gb.data() + p * n;
                    for (std::int64_t j = 0; j < n; ++j) gbrow[j] += av * grow[j];
                }
            }
        }
    });
}

Tensor transpose(const Tensor& a) {
    if (a.rank() != 2) throw std::invalid_argument("transpose: rank-2 required, got " + shape_str(a.shape()));
    const std::int64_t m = a.extent(0), n = a.extent(1);
    std::vector<double> d(a.data().size());
    for (std::int64_t i = 0; i < m; ++i)
        for (std::int64_t j = 0; j < n; ++j)
            d[static_cast<std::size_t>(j * m + i)] = a.data()[static_cast<std::size_t>(i * n + j)];
    Tensor out = Tensor::from_data({n, m}, std::move(d));
    auto ai = a.impl(), oi = out.impl();
    return finish_op(out, a.requires_grad(), [ai, oi, m, n]() {
        if (!grad_ready(oi) || !ai->requires_grad) return;
        auto& ga = ai->ensure_grad();
        for (std::int64_t i = 0; i < m; ++i)
            for (std::int64_t j = 0; j < n; ++j)
                ga[static_cast<std::size_t>(i * n + j)] += oi->grad[static_cast<std::size_t>(j * m + i)];
    });
}

Tensor reshape(const Tensor& a, Shape new_shape) {
    if (shape_numel(new_shape) != a.numel())
        throw std::invalid_argument("reshape: " + shape_str(a.shape()) + " has " + std::to_string(a.numel()) +
                                    " elements, target " + shape_str(new_shape));
    Tensor out = Tensor::from_data(std::move(new_shape), a.data());
    auto ai = a.impl(), oi = out.impl();
    return finish_op(out, a.requires_grad(), [ai, oi]() {
        if (!grad_ready(oi) || !ai->requires_grad) return;
        ai->accum_grad(oi->grad);
    });
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
    if (parts.empty()) throw std::invalid_argument("concat: no inputs");
    const Shape& first = parts[0].shape();
    if (axis < 0 || axis >= static_cast<int>(first.size()))
        throw std::invalid_argument("concat: axis " + std::to_string(axis) + " out of range for " + shape_str(first));
    Shape out_shape = first;
    for (std::size_t p = 1; p < parts.size(); ++p) {
        Shape s = parts[p].shape();
        if (s.size() != first.size())
            throw std::invalid_argument("concat: rank mismatch " + shape_str(first) + " vs " + shape_str(s));
        for (std::size_t ax = 0; ax < s.size(); ++ax)
            if (ax != static_cast<std::size_t>(axis) && s[ax] != first[ax])
                throw std::invalid_argument("concat: extent mismatch " + shape_str(first) + " vs " + shape_str(s));
        out_shape[static_cast<std::size_t>(axis)] += s[static_cast<std::size_t>(axis)];
    }

    std::int64_t outer = 1, inner = 1;
    for (int ax = 0; ax < axis; ++ax) outer *= first[static_cast<std::size_t>(ax)];
    for (std::size_t ax = static_cast<std::size_t>(axis) + 1; ax < first.size(); ++ax) inner *= first[ax];
    const std::int64_t out_axis = out_shape[static_cast<std::size_t>(axis)];

    std::vector<double> d(static_cast<std::size_t>(shape_numel(out_shape)));
    std::vector<std::int64_t> offsets(parts.size());
    std::int64_t off = 0;
    for (std::size_t p = 0; p < parts.size(); ++p) {
        offsets[p] = off;
        const std::int64_t len = parts[p].shape()[static_cast<std::size_t>(axis)];
        const auto& src = parts[p].data();
        for (std::int64_t o = 0; o < outer; ++o)
            std::copy(src.begin() + o * len * inner, src.begin() + (o + 1) * len * inner,
                      d.begin() + (o * out_axis + off) * inner);
        off += len;
    }

    Tensor out = Tensor::from_data(out_shape, std::move(d));
    bool any = false;
    std::vector<std::shared_ptr<TensorImpl>> impls;
    std::vector<std::int64_t> lens;
    for (const auto& p : parts) {
        any = any || p.requires_grad();
        impls.push_back(p.impl());
        lens.push_back(p.shape()[static_cast<std::size_t>(axis)]);
    }
    auto oi = out.impl();
    return finish_op(out, any, [impls, lens, offsets, oi, outer, inner, out_axis]() {
        if (!grad_ready(oi)) return;
        for (std::size_t p = 0; p < impls.size(); ++p) {
            if (!impls[p]->requires_grad) continue;
            auto& g = impls[p]->ensure_grad();
            for (std::int64_t o = 0; o < outer; ++o) {
                const double* src = oi->grad.data() + (o * out_axis + offsets[p]) * inner;
                double* dst = g.data() + o * lens[p] * inner;
                for (std::int64_t i = 0; i < lens[p] * inner; ++i) dst[i] += src[i];
            }
        }
    });
}

Tensor slice(const Tensor& a, int axis, std::int64_t begin, std::int64_t end) {
    const Shape& s = a.shape();
    if (axis < 0 || axis >= static_cast<int>(s.size()))
        throw std::invalid_argument("slice: axis " + std::to_string(axis) + " out of range for " + shape_str(s));
    const std::int64_t len = s[static_cast<std::size_t>(axis)];
    if (begin < 0 || end > len || begin > end)
        throw std::invalid_argument("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                                    ") invalid for extent " + std::to_string(len));
    std::int64_t outer = 1, inner = 1;
    for (int ax = 0; ax < axis; ++ax) outer *= s[static_cast<std::size_t>(ax)];
    for (std::size_t ax = static_cast<std::size_t>(axis) + 1; ax < s.size(); ++ax) inner *= s[ax];
    const std::int64_t out_len = end - begin;

    Shape out_shape = s;
    out_shape[static_cast<std::size_t>(axis)] = out_len;
    std::vector<double> d(static_cast<std::size_t>(outer * out_len * inner));
    for (std::int64_t o = 0; o < outer; ++o)
        std::copy(a.data().begin() + (o * len + begin) * inner, a.data().begin() + (o * len + end) * inner,
                  d.begin() + o * out_len * inner);

    Tensor out = Tensor::from_data(std::move(out_shape), std::move(d));
    auto ai = a.impl(), oi = out.impl();
    return finish_op(out, a.requires_grad(), [ai, oi, outer, inner, len, begin, out_len]() {
        if (!grad_ready(oi) || !ai->requires_grad) return;
        auto& g = ai->ensure_grad();
        for (std::int64_t o = 0; o < outer; ++o) {
            const double* src = oi->grad.data() + o * out_len * inner;
            double* dst = g.data() + (o * len + begin) * inner;
            for (std::int64_t i = 0; i < out_len * inner; ++i) dst[i] += src[i];
        }
    });
}

Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data()) s += v;
    Tensor out = Tensor::scalar(s);
    auto ai = a.impl(), oi = out.impl();
    return finish_op(out, a.requires_grad(), [ai, oi]() {
        if (!grad_ready(oi) || !ai->requires_grad) return;
        auto& g = ai->ensure_grad();
        for (auto& v : g) v += oi->grad[0];
    });
}

Tensor mean(const Tensor& a) {
    if (a.numel() == 0) throw std::invalid_argument("mean: empty tensor");
    double s = 0.0;
    for (double v : a.data()) s += v;
    const double inv = 1.0 / static_cast<double>(a.numel());
    Tensor out = Tensor::scalar(s * inv);
    auto ai = a.impl(), oi = out.impl();
    return finish_op(out, a.requires_grad(), [ai, oi, inv]() {
        if (!grad_ready(oi) || !ai->requires_grad) return;
        auto& g = ai->ensure_grad();
        for (auto& v : g) v += oi->grad[0] * inv;
    });
}

}  // namespace tinyvlm
