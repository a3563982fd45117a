#include "tinyvlm/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace tinyvlm {

namespace {

Tensor finish(Tensor out, bool any_input_grad, std::function<void()> backward_fn) {
    Tape* tape = Tape::active();
    if (tape != nullptr && any_input_grad) {
        out.set_requires_grad(true);
        tape->record(std::move(backward_fn));
    }
    return out;
}

bool grad_ready(const std::shared_ptr<TensorImpl>& out) { return !out->grad.empty(); }

Tensor unary_elementwise(const Tensor& x, double (*fwd)(double), double (*dfdx)(double)) {
    std::vector<double> d(x.data().size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = fwd(x.data()[i]);
    Tensor out = Tensor::from_data(x.shape(), std::move(d));
    auto xi = x.impl(), oi = out.impl();
    return finish(out, x.requires_grad(), [xi, oi, dfdx]() {
        if (!grad_ready(oi) || !xi->requires_grad) return;
        auto& g = xi->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += dfdx(xi->data[i]) * oi->grad[i];
    });
}

}  // namespace

double softplus(double x) {
    if (x > 30.0) return x;           // log1p(exp(x)) == x to double precision
    if (x < -30.0) return std::exp(x);
    return std::log1p(std::exp(x));
}

Tensor silu(const Tensor& x) {
    return unary_elementwise(
        x, [](double v) { return v / (1.0 + std::exp(-v)); },
        [](double v) {
            const double s = 1.0 / (1.0 + std::exp(-v));
            return s * (1.0 + v * (1.0 - s));
        });
}

Tensor gelu(const Tensor& x) {
    return unary_elementwise(
        x, [](double v) { return 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0))); },
        [](double v) {
            const double cdf = 0.5 * (1.0 + std::erf(v / std::sqrt(2.0)));
            const double pdf = std::exp(-0.5 * v * v) / std::sqrt(2.0 * M_PI);
            return cdf + v * pdf;
        });
}

Tensor mish(const Tensor& x) {
    return unary_elementwise(
        x, [](double v) { return v * std::tanh(softplus(v)); },
        [](double v) {
            const double sp = softplus(v);
            const double t = std::tanh(sp);
            const double sig = 1.0 / (1.0 + std::exp(-v));  // d softplus / dx
            return t + v * (1.0 - t * t) * sig;
        });
}

Tensor softmax(const Tensor& x, int axis) {
    const Shape& s = x.shape();
    if (axis < 0 || axis >= static_cast<int>(s.size()))
        throw std::invalid_argument("softmax: axis " + std::to_string(axis) + " out of range for " + shape_str(s));
    std::int64_t outer = 1, inner = 1;
    const std::int64_t n = s[static_cast<std::size_t>(axis)];
    for (int ax = 0; ax < axis; ++ax) outer *= s[static_cast<std::size_t>(ax)];
    for (std::size_t ax = static_cast<std::size_t>(axis) + 1; ax < s.size(); ++ax) inner *= s[ax];

    std::vector<double> d(x.data().size());
    const double* xd = x.data().data();
    for (std::int64_t o = 0; o < outer; ++o) {
        for (std::int64_t in = 0; in < inner; ++in) {
            const std::int64_t base = o * n * inner + in;
            double mx = -std::numeric_limits<double>::infinity();
            for (std::int64_t i = 0; i < n; ++i) mx = std::max(mx, xd[base + i * inner]);
            double denom = 0.0;
            for (std::int64_t i = 0; i < n; ++i) {
                const double e = std::exp(xd[base + i * inner] - mx);
                d[static_cast<std::size_t>(base + i * inner)] = e;
                denom += e;
            }
            for (std::int64_t i = 0; i < n; ++i) d[static_cast<std::size_t>(base + i * inner)] /= denom;
        }
    }
    Tensor out = Tensor::from_data(s, std::move(d));
    auto xi = x.impl(), oi = out.impl();
    return finish(out, x.requires_grad(), [xi, oi, outer, inner, n]() {
        if (!grad_ready(oi) || !xi->requires_grad) return;
        auto& g = xi->ensure_grad();
        for (std::int64_t o = 0; o < outer; ++o) {
            for (std::int64_t in = 0; in < inner; ++in) {
                const std::int64_t base = o * n * inner + in;
                double dot = 0.0;
                for (std::int64_t i = 0; i < n; ++i)
                    dot += oi->data[static_cast<std::size_t>(base + i * inner)] *
                           oi->grad[static_cast<std::size_t>(base + i * inner)];
                for (std::int64_t i = 0; i < n; ++i) {
                    const auto idx = static_cast<std::size_t>(base + i * inner);
                    g[idx] += oi->data[idx] * (oi->grad[idx] - dot);
                }
            }
        }
    });
}

Tensor rms_norm(const Tensor& x, const Tensor& weight, double eps) {
    if (weight.rank() != 1 || x.rank() < 1 || x.shape().back() != weight.extent(0))
        throw std::invalid_argument("rms_norm: weight " + shape_str(weight.shape()) +
                                    " must match last extent of " + shape_str(x.shape()));
    const std::int64_t d = weight.extent(0);
    const std::int64_t rows = x.numel() / d;
    std::vector<double> out_data(x.data().size());
    std::vector<double> inv_rms(static_cast<std::size_t>(rows));
    for (std::int64_t r = 0; r < rows; ++r) {
        double ss = 0.0;
        for (std::int64_t c = 0; c < d; ++c) {
            const double v = x.data()[static_cast<std::size_t>(r * d + c)];
            ss += v * v;
        }
        const double inv = 1.0 / std::sqrt(ss / static_cast<double>(d) + eps);
        inv_rms[static_cast<std::size_t>(r)] = inv;
        for (std::int64_t c = 0; c < d; ++c)
            out_data[static_cast<std::size_t>(r * d + c)] =
                x.data()[static_cast<std::size_t>(r * d + c)] * inv * weight.data()[static_cast<std::size_t>(c)];
    }
    Tensor out = Tensor::from_data(x.shape(), std::move(out_data));
    auto xi = x.impl(), wi = weight.impl(), oi = out.impl();
    return finish(out, x.requires_grad() || weight.requires_grad(),
                  [xi, wi, oi, rows, d, inv_rms = std::move(inv_rms)]() {
        if (!grad_ready(oi)) return;
        for (std::int64_t r = 0; r < rows; ++r) {
            const double inv = inv_rms[static_cast<std::size_t>(r)];
            const double* xr = xi->data.data() + r * d;
            const double* gr = oi->grad.data() + r * d;
            if (wi->requires_grad) {
                auto& gw = wi->ensure_grad();
                for (std::int64_t c = 0; c < d; ++c) gw[static_cast<std::size_t>(c)] += gr[c] * xr[c] * inv;
            }
            if (xi->requires_grad) {
                // y_c = x_c * inv * w_c with inv = (mean(x^2)+eps)^{-1/2}
                // dx_c = inv * w_c * g_c - inv^3/d * x_c * sum_k(g_k w_k x_k)
                double dot = 0.0;
                for (std::int64_t c = 0; c < d; ++c) dot += gr[c] * wi->data[static_cast<std::size_t>(c)] * xr[c];
                auto& gx = xi->ensure_grad();
                const double k = inv * inv * inv * dot / static_cast<double>(d);
                for (std::int64_t c = 0; c < d; ++c)
                    gx[static_cast<std::size_t>(r * d + c)] +=
                        inv * wi->data[static_cast<std::size_t>(c)] * gr[c] - k * xr[c];
            }
        }
    });
}

Tensor causal_mask_fill(const Tensor& scores) {
    if (scores.rank() != 2 || scores.extent(0) != scores.extent(1))
        throw std::invalid_argument("causal_mask_fill: square rank-2 tensor required, got " + shape_str(scores.shape()));
    const std::int64_t n = scores.extent(0);
    std::vector<double> d = scores.data();
    const double neg_inf = -std::numeric_limits<double>::infinity();
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = i + 1; j < n; ++j) d[static_cast<std::size_t>(i * n + j)] = neg_inf;
    Tensor out = Tensor::from_data(scores.shape(), std::move(d));
    auto si = scores.impl(), oi = out.impl();
    return finish(out, scores.requires_grad(), [si, oi, n]() {
        if (!grad_ready(oi) || !si->requires_grad) return;
        auto& g = si->ensure_grad();
        for (std::int64_t i = 0; i < n; ++i)
            for (std::int64_t j = 0; j <= i; ++j)
                g[static_cast<std::size_t>(i * n + j)] += oi->grad[static_cast<std::size_t>(i * n + j)];
    });
}

Tensor embedding_lookup(const Tensor& table, const std::vector<std::int64_t>& ids) {
    if (table.rank() != 2)
        throw std::invalid_argument("embedding_lookup: table must be rank 2, got " + shape_str(table.shape()));
    const std::int64_t v = table.extent(0), d = table.extent(1);
    const auto n = static_cast<std::int64_t>(ids.size());
    std::vector<double> out_data(static_cast<std::size_t>(n * d));
    for (std::int64_t i = 0; i < n; ++i) {
        const std::int64_t id = ids[static_cast<std::size_t>(i)];
        if (id < 0 || id >= v)
            throw std::out_of_range("embedding_lookup: id " + std::to_string(id) + " outside [0, " +
                                    std::to_string(v) + ")");
        std::copy(table.data().begin() + id * d, table.data().begin() + (id + 1) * d, out_data.begin() + i * d);
    }
    Tensor out = Tensor::from_data({n, d}, std::move(out_data));
    auto ti = table.impl(), oi = out.impl();
    return finish(out, table.requires_grad(), [ti, oi, ids, n, d]() {
        if (!grad_ready(oi) || !ti->requires_grad) return;
        auto& g = ti->ensure_grad();
        for (std::int64_t i = 0; i < n; ++i) {
            const std::int64_t id = ids[static_cast<std::size_t>(i)];
            for (std::int64_t c = 0; c < d; ++c)
                g[static_cast<std::size_t>(id * d + c)] += oi->grad[static_cast<std::size_t>(i * d + c)];
        }
    });
}

Tensor rope(const Tensor& x, int num_heads, double base) {
    if (x.rank() != 2) throw std::invalid_argument("rope: rank-2 input required, got " + shape_str(x.shape()));
    const std::int64_t l = x.extent(0), dim = x.extent(1);
    if (num_heads <= 0 || dim % num_heads != 0)
        throw std::invalid_argument("rope: feature extent " + std::to_string(dim) + " not divisible by " +
                                    std::to_string(num_heads) + " heads");
    const std::int64_t hd = dim / num_heads;
    if (hd % 2 != 0) throw std::invalid_argument("rope: head dim " + std::to_string(hd) + " must be even");
    const std::int64_t half = hd / 2;

    // Rotation pairs (i, i + hd/2) within each head; angle = pos * base^(-2i/hd).
    std::vector<double> freqs(static_cast<std::size_t>(half));
    for (std::int64_t i = 0; i < half; ++i)
        freqs[static_cast<std::size_t>(i)] = std::pow(base, -2.0 * static_cast<double>(i) / static_cast<double>(hd));

    std::vector<double> d(x.data().size());
    for (std::int64_t p = 0; p < l; ++p) {
        for (int h = 0; h < num_heads; ++h) {
            const std::int64_t off = p * dim + h * hd;
            for (std::int64_t i = 0; i < half; ++i) {
                const double theta = static_cast<double>(p) * freqs[static_cast<std::size_t>(i)];
                const double c = std::cos(theta), s = std::sin(theta);
                const double a = x.data()[static_cast<std::size_t>(off + i)];
                const double b = x.data()[static_cast<std::size_t>(off + i + half)];
                d[static_cast<std::size_t>(off + i)] = a * c - b * s;
                d[static_cast<std::size_t>(off + i + half)] = a * s + b * c;
            }
        }
    }
    Tensor out = Tensor::from_data(x.shape(), std::move(d));
    auto xi = x.impl(), oi = out.impl();
    return finish(out, x.requires_grad(), [xi, oi, l, dim, num_heads, hd, half, freqs = std::move(freqs)]() {
        if (!grad_ready(oi) || !xi->requires_grad) return;
        auto& g = xi->ensure_grad();
        for (std::int64_t p = 0; p < l; ++p) {
            for (int h = 0; h < num_heads; ++h) {
                const std::int64_t off = p * dim + h * hd;
                for (std::int64_t i = 0; i < half; ++i) {
                    const double theta = static_cast<double>(p) * freqs[static_cast<std::size_t>(i)];
                    const double c = std::cos(theta), s = std::sin(theta);
                    const double ga = oi->grad[static_cast<std::size_t>(off + i)];
                    const double gb = oi->grad[static_cast<std::size_t>(off + i + half)];
                    g[static_cast<std::size_t>(off + i)] += c * ga + s * gb;
                    g[static_cast<std::size_t>(off + i + half)] += -s * ga + c * gb;
                }
            }
        }
    });
}

Tensor cross_entropy_masked(const Tensor& logits, const std::vector<std::int64_t>& targets,
                            const std::vector<bool>& mask) {
    if (logits.rank() != 2)
        throw std::invalid_argument("cross_entropy_masked: logits must be rank 2, got " + shape_str(logits.shape()));
    const std::int64_t l = logits.extent(0), v = logits.extent(1);
    if (static_cast<std::int64_t>(targets.size()) != l || static_cast<std::int64_t>(mask.size()) != l)
        throw std::invalid_argument("cross_entropy_masked: targets/mask length must equal " + std::to_string(l));
    std::int64_t n_masked = 0;
    for (std::int64_t i = 0; i < l; ++i) {
        if (!mask[static_cast<std::size_t>(i)]) continue;
        ++n_masked;
        const std::int64_t t = targets[static_cast<std::size_t>(i)];
        if (t < 0 || t >= v)
            throw std::out_of_range("cross_entropy_masked: target " + std::to_string(t) + " outside [0, " +
                                    std::to_string(v) + ")");
    }
    if (n_masked == 0) throw std::invalid_argument("cross_entropy_masked: empty mask (no supervised positions)");

    // value = mean over masked rows of (logsumexp(row) - row[target])
    double total = 0.0;
    const double* xd = logits.data().data();
    for (std::int64_t i = 0; i < l; ++i) {
        if (!mask[static_cast<std::size_t>(i)]) continue;
        const double* row = xd + i * v;
        double mx = row[0];
        for (std::int64_t j = 1; j < v; ++j) mx = std::max(mx, row[j]);
        double denom = 0.0;
        for (std::int64_t j = 0; j < v; ++j) denom += std::exp(row[j] - mx);
        total += (mx + std::log(denom)) - row[targets[static_cast<std::size_t>(i)]];
    }
    Tensor out = Tensor::scalar(total / static_cast<double>(n_masked));
    auto li = logits.impl(), oi = out.impl();
    return finish(out, logits.requires_grad(), [li, oi, targets, mask, l, v, n_masked]() {
        if (!grad_ready(oi) || !li->requires_grad) return;
        const double gscale = oi->grad[0] / static_cast<double>(n_masked);
        auto& g = li->ensure_grad();
        for (std::int64_t i = 0; i < l; ++i) {
            if (!mask[static_cast<std::size_t>(i)]) continue;   // unmasked rows get exactly zero
            const double* row = li->data.data() + i * v;
            double mx = row[0];
            for (std::int64_t j = 1; j < v; ++j) mx = std::max(mx, row[j]);
            double denom = 0.0;
            for (std::int64_t j = 0; j < v; ++j) denom += std::exp(row[j] - mx);
            for (std::int64_t j = 0; j < v; ++j) {
                const double p = std::exp(row[j] - mx) / denom;
                g[static_cast<std::size_t>(i * v + j)] += gscale * p;
            }
            g[static_cast<std::size_t>(i * v + targets[static_cast<std::size_t>(i)])] -= gscale;
        }
    });
}

Tensor depthwise_conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, int stride, int padding) {
    if (x.rank() != 3 || weight.rank() != 3)
        throw std::invalid_argument("depthwise_conv2d: x [C,H,W] and weight [C,KH,KW] required, got " +
                                    shape_str(x.shape()) + " and " + shape_str(weight.shape()));
    const std::int64_t c = x.extent(0), h = x.extent(1), w = x.extent(2);
    const std::int64_t kc = weight.extent(0), kh = weight.extent(1), kw = weight.extent(2);
    if (kc != c)
        throw std::invalid_argument("depthwise_conv2d: channel mismatch " + shape_str(x.shape()) + " vs " +
                                    shape_str(weight.shape()));
    if (bias.rank() != 1 || bias.extent(0) != c)
        throw std::invalid_argument("depthwise_conv2d: bias must have shape [" + std::to_string(c) + "]");
    if (stride <= 0 || padding < 0) throw std::invalid_argument("depthwise_conv2d: bad stride/padding");
    const std::int64_t ho = (h + 2 * padding - kh) / stride + 1;
    const std::int64_t wo = (w + 2 * padding - kw) / stride + 1;
    if (ho <= 0 || wo <= 0) throw std::invalid_argument("depthwise_conv2d: non-positive output size");

    std::vector<double> d(static_cast<std::size_t>(c * ho * wo));
    for (std::int64_t ch = 0; ch < c; ++ch) {
        for (std::int64_t i = 0; i < ho; ++i) {
            for (std::int64_t j = 0; j < wo; ++j) {
                double acc = bias.data()[static_cast<std::size_t>(ch)];
                for (std::int64_t ki = 0; ki < kh; ++ki) {
                    const std::int64_t yi = i * stride - padding + ki;
                    if (yi < 0 || yi >= h) continue;
                    for (std::int64_t kj = 0; kj < kw; ++kj) {
                        const std::int64_t xj = j * stride - padding + kj;
                        if (xj < 0 || xj >= w) continue;
                        acc += x.data()[static_cast<std::size_t>((ch * h + yi) * w + xj)] *
                               weight.data()[static_cast<std::size_t>((ch * kh + ki) * kw + kj)];
                    }
                }
                d[static_cast<std::size_t>((ch * ho + i) * wo + j)] = acc;
            }
        }
    }
    Tensor out = Tensor::from_data({c, ho, wo}, std::move(d));
    auto xi = x.impl(), wi = weight.impl(), bi = bias.impl(), oi = out.impl();
    const bool any = x.requires_grad() || weight.requires_grad() || bias.requires_grad();
    return finish(out, any, [xi, wi, bi, oi, c, h, w, kh, kw, ho, wo, stride, padding]() {
        if (!grad_ready(oi)) return;
        for (std::int64_t ch = 0; ch < c; ++ch) {
            for (std::int64_t i = 0; i < ho; ++i) {
                for (std::int64_t j = 0; j < wo; ++j) {
                    const double go = oi->grad[static_cast<std::size_t>((ch * ho + i) * wo + j)];
                    if (go == 0.0) continue;
                    if (bi->requires_grad) bi->ensure_grad()[static_cast<std::size_t>(ch)] += go;
                    for (std::int64_t ki = 0; ki < kh; ++ki) {
                        const std::int64_t yi = i * stride - padding + ki;
                        if (yi < 0 || yi >= h) continue;
                        for (std::int64_t kj = 0; kj < kw; ++kj) {
                            const std::int64_t xj = j * stride - padding + kj;
                            if (xj < 0 || xj >= w) continue;
                            const auto xidx = static_cast<std::size_t>((ch * h + yi) * w + xj);
                            const auto widx = static_cast<std::size_t>((ch * kh + ki) * kw + kj);
                            if (xi->requires_grad) xi->ensure_grad()[xidx] += wi->data[widx] * go;
                            if (wi->requires_grad) wi->ensure_grad()[widx] += xi->data[xidx] * go;
                        }
                    }
                }
            }
        }
    });
}

Tensor pointwise_conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    if (x.rank() != 3 || weight.rank() != 2)
        throw std::invalid_argument("pointwise_conv2d: x [C,H,W] and weight [Cout,Cin] required, got " +
                                    shape_str(x.shape()) + " and " + shape_str(weight.shape()));
    const std::int64_t cin = x.extent(0), h = x.extent(1), w = x.extent(2);
    const std::int64_t cout = weight.extent(0);
    if (weight.extent(1) != cin)
        throw std::invalid_argument("pointwise_conv2d: channel mismatch " + shape_str(x.shape()) + " vs " +
                                    shape_str(weight.shape()));
    if (bias.rank() != 1 || bias.extent(0) != cout)
        throw std::invalid_argument("pointwise_conv2d: bias must have shape [" + std::to_string(cout) + "]");
    const std::int64_t hw = h * w;
    std::vector<double> d(static_cast<std::size_t>(cout * hw));
    for (std::int64_t o = 0; o < cout; ++o) {
        double* dst = d.data() + o * hw;
        const double b = bias.data()[static_cast<std::size_t>(o)];
        for (std::int64_t p = 0; p < hw; ++p) dst[p] = b;
        for (std::int64_t i = 0; i < cin; ++i) {
            const double wv = weight.data()[static_cast<std::size_t>(o * cin + i)];
            const double* src = x.data().data() + i * hw;
            for (std::int64_t p = 0; p < hw; ++p) dst[p] += wv * src[p];
        }
    }
    Tensor out = Tensor::from_data({cout, h, w}, std::move(d));
    auto xi = x.impl(), wi = weight.impl(), bi = bias.impl(), oi = out.impl();
    const bool any = x.requires_grad() || weight.requires_grad() || bias.requires_grad();
    return finish(out, any, [xi, wi, bi, oi, cin, cout, hw]() {
        if (!grad_ready(oi)) return;
        for (std::int64_t o = 0; o < cout; ++o) {
            const double* go = oi->grad.data() + o * hw;
            if (bi->requires_grad) {
                double s = 0.0;
                for (std::int64_t p = 0; p < hw; ++p) s += go[p];
                bi->ensure_grad()[static_cast<std::size_t>(o)] += s;
            }
            for (std::int64_t i = 0; i < cin; ++i) {
                if (wi->requires_grad) {
                    double s = 0.0;
                    const double* src = xi->data.data() + i * hw;
                    for (std::int64_t p = 0; p < hw; ++p) s += go[p] * src[p];
                    wi->ensure_grad()[static_cast<std::size_t>(o * cin + i)] += s;
                }
                if (xi->requires_grad) {
                    const double wv = wi->data[static_cast<std::size_t>(o * cin + i)];
                    double* gx = xi->ensure_grad().data() + i * hw;
                    for (std::int64_t p = 0; p < hw; ++p) gx[p] += wv * go[p];
                }
            }
        }
    });
}

Tensor average_pool2d(const Tensor& x, int pool_h, int pool_w) {
    if (x.rank() != 3)
        throw std::invalid_argument("average_pool2d: x [C,H,W] required, got " + shape_str(x.shape()));
    const std::int64_t c = x.extent(0), h = x.extent(1), w = x.extent(2);
    if (pool_h <= 0 || pool_w <= 0 || h % pool_h != 0 || w % pool_w != 0)
        throw std::invalid_argument("average_pool2d: window " + std::to_string(pool_h) + "x" + std::to_string(pool_w) +
                                    " must evenly divide " + shape_str(x.shape()));
    const std::int64_t ho = h / pool_h, wo = w / pool_w;
    const double inv = 1.0 / static_cast<double>(pool_h * pool_w);
    std::vector<double> d(static_cast<std::size_t>(c * ho * wo));
    for (std::int64_t ch = 0; ch < c; ++ch)
        for (std::int64_t i = 0; i < ho; ++i)
            for (std::int64_t j = 0; j < wo; ++j) {
                double acc = 0.0;
                for (std::int64_t ki = 0; ki < pool_h; ++ki)
                    for (std::int64_t kj = 0; kj < pool_w; ++kj)
                        acc += x.data()[static_cast<std::size_t>((ch * h + i * pool_h + ki) * w + j * pool_w + kj)];
                d[static_cast<std::size_t>((ch * ho + i) * wo + j)] = acc * inv;
            }
    Tensor out = Tensor::from_data({c, ho, wo}, std::move(d));
    auto xi = x.impl(), oi = out.impl();
    return finish(out, x.requires_grad(), [xi, oi, c, h, w, ho, wo, pool_h, pool_w, inv]() {
        if (!grad_ready(oi) || !xi->requires_grad) return;
        auto& g = xi->ensure_grad();
        for (std::int64_t ch = 0; ch < c; ++ch)
            for (std::int64_t i = 0; i < ho; ++i)
                for (std::int64_t j = 0; j < wo; ++j) {
                    const double go = oi->grad[static_cast<std::size_t>((ch * ho + i) * wo + j)] * inv;
                    for (std::int64_t ki = 0; ki < pool_h; ++ki)
                        for (std::int64_t kj = 0; kj < pool_w; ++kj)
                            g[static_cast<std::size_t>((ch * h + i * pool_h + ki) * w + j * pool_w + kj)] += go;
                }
    });
}

Tensor window_merge(const Tensor& tokens, std::int64_t grid_side, std::int64_t pool_h, std::int64_t pool_w) {
    if (tokens.rank() != 2)
        throw std::invalid_argument("window_merge: tokens must be rank 2, got " + shape_str(tokens.shape()));
    const std::int64_t g = tokens.extent(0), c = tokens.extent(1);
    if (grid_side * grid_side != g)
        throw std::invalid_argument("window_merge: token count " + std::to_string(g) + " is not grid_side^2 for " +
                                    std::to_string(grid_side));
    if (pool_h <= 0 || pool_w <= 0 || grid_side % pool_h != 0 || grid_side % pool_w != 0)
        throw std::invalid_argument("window_merge: window " + std::to_string(pool_h) + "x" + std::to_string(pool_w) +
                                    " does not divide grid side " + std::to_string(grid_side));
    const std::int64_t rows_out = grid_side / pool_h, cols_out = grid_side / pool_w;
    const std::int64_t t = rows_out * cols_out;
    const std::int64_t out_dim = c * pool_h * pool_w;

    std::vector<double> d(static_cast<std::size_t>(t * out_dim));
    for (std::int64_t wr = 0; wr < rows_out; ++wr)
        for (std::int64_t wc = 0; wc < cols_out; ++wc) {
            const std::int64_t ti = wr * cols_out + wc;
            for (std::int64_t dy = 0; dy < pool_h; ++dy)
                for (std::int64_t dx = 0; dx < pool_w; ++dx) {
                    const std::int64_t src = (wr * pool_h + dy) * grid_side + (wc * pool_w + dx);
                    const std::int64_t cell = dy * pool_w + dx;
                    std::copy(tokens.data().begin() + src * c, tokens.data().begin() + (src + 1) * c,
                              d.begin() + ti * out_dim + cell * c);
                }
        }
    Tensor out = Tensor::from_data({t, out_dim}, std::move(d));
    auto tokens_i = tokens.impl(), oi = out.impl();
    return finish(out, tokens.requires_grad(),
                  [tokens_i, oi, grid_side, pool_h, pool_w, rows_out, cols_out, c, out_dim]() {
        if (!grad_ready(oi) || !tokens_i->requires_grad) return;
        auto& g = tokens_i->ensure_grad();
        for (std::int64_t wr = 0; wr < rows_out; ++wr)
            for (std::int64_t wc = 0; wc < cols_out; ++wc) {
                const std::int64_t ti = wr * cols_out + wc;
                for (std::int64_t dy = 0; dy < pool_h; ++dy)
                    for (std::int64_t dx = 0; dx < pool_w; ++dx) {
                        const std::int64_t src = (wr * pool_h + dy) * grid_side + (wc * pool_w + dx);
                        const std::int64_t cell = dy * pool_w + dx;
                        for (std::int64_t ch = 0; ch < c; ++ch)
                            g[static_cast<std::size_t>(src * c + ch)] +=
                                oi->grad[static_cast<std::size_t>(ti * out_dim + cell * c + ch)];
                    }
            }
    });
}

Tensor multihead_attention(const Tensor& q, const Tensor& k, const Tensor& v, int num_heads, bool causal) {
    if (q.rank() != 2 || k.shape() != q.shape() || v.shape() != q.shape())
        throw std::invalid_argument("multihead_attention: q/k/v must share a rank-2 shape");
    const std::int64_t dim = q.extent(1);
    if (num_heads <= 0 || dim % num_heads != 0)
        throw std::invalid_argument("multihead_attention: dim " + std::to_string(dim) + " not divisible by " +
                                    std::to_string(num_heads) + " heads");
    const std::int64_t hd = dim / num_heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));
    std::vector<Tensor> head_outputs;
    head_outputs.reserve(static_cast<std::size_t>(num_heads));
    for (int h = 0; h < num_heads; ++h) {
        Tensor qh = slice(q, 1, h * hd, (h + 1) * hd);
        Tensor kh = slice(k, 1, h * hd, (h + 1) * hd);
        Tensor vh = slice(v, 1, h * hd, (h + 1) * hd);
        Tensor scores = scale(matmul(qh, transpose(kh)), inv_sqrt);
        if (causal) scores = causal_mask_fill(scores);
        Tensor probs = softmax(scores, 1);
        head_outputs.push_back(matmul(probs, vh));
    }
    return concat(head_outputs, 1);
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) { return add_bias(matmul(x, w), b); }

}  // namespace tinyvlm
