#include "tinyvlm/projector.hpp"

#include <algorithm>
#include <set>
#include <sstream>
#include <stdexcept>

namespace tinyvlm {

namespace {
constexpr double kInitStd = 0.02;

std::vector<std::int64_t> divisors(std::int64_t n) {
    std::vector<std::int64_t> out;
    for (std::int64_t d = 1; d <= n; ++d)
        if (n % d == 0) out.push_back(d);
    return out;
}

// Grid [C, gs, gs] from row-major tokens [G, C] and back.
Tensor tokens_to_grid(const Tensor& tokens, std::int64_t gs) {
    return reshape(transpose(tokens), {tokens.extent(1), gs, gs});
}

Tensor grid_to_tokens(const Tensor& grid) {
    const std::int64_t c = grid.extent(0), hw = grid.extent(1) * grid.extent(2);
    return transpose(reshape(grid, {c, hw}));
}

}  // namespace

std::vector<std::int64_t> valid_token_counts(std::int64_t grid_side) {
    std::set<std::int64_t> counts;
    for (auto ph : divisors(grid_side))
        for (auto pw : divisors(grid_side)) counts.insert((grid_side / ph) * (grid_side / pw));
    return {counts.begin(), counts.end()};
}

MergePlan merge_plan(std::int64_t grid_side, std::int64_t target_tokens) {
    if (grid_side <= 0) throw std::invalid_argument("merge_plan: grid_side must be positive");
    MergePlan best;
    bool found = false;
    std::int64_t best_skew = 0;
    for (auto ph : divisors(grid_side)) {
        for (auto pw : divisors(grid_side)) {
            if ((grid_side / ph) * (grid_side / pw) != target_tokens) continue;
            const std::int64_t skew = std::max(ph, pw) * 1000 / std::min(ph, pw);  // aspect ratio x1000
            if (!found || skew < best_skew || (skew == best_skew && ph > best.pool_h)) {
                best = MergePlan{ph, pw};
                best_skew = skew;
                found = true;
            }
        }
    }
    if (!found) {
        std::ostringstream os;
        os << "no pooling window yields " << target_tokens << " tokens from a " << grid_side << "x" << grid_side
           << " grid; valid counts:";
        for (auto c : valid_token_counts(grid_side)) os << " " << c;
        throw std::invalid_argument(os.str());
    }
    return best;
}

Projector::Projector(ProjectorConfig cfg, int grid_side, std::mt19937_64& rng) : cfg_(cfg), grid_side_(grid_side) {
    const std::int64_t g = static_cast<std::int64_t>(grid_side) * grid_side;
    const int in = cfg_.in_dim, out = cfg_.out_dim;
    if (in <= 0 || out <= 0 || grid_side <= 0) throw std::invalid_argument("projector: bad dimensions");

    switch (cfg_.kind) {
        case ProjectorKind::Linear:
            if (cfg_.target_tokens != g)
                throw std::invalid_argument("linear projector preserves token count: target_tokens must be " +
                                            std::to_string(g) + ", got " + std::to_string(cfg_.target_tokens));
            w1_ = Tensor::randn({in, out}, rng, kInitStd, 0.0, true);
            b1_ = Tensor::zeros({out}, true);
            break;
        case ProjectorKind::Mlp:
            if (cfg_.target_tokens != g)
                throw std::invalid_argument("mlp projector preserves token count: target_tokens must be " +
                                            std::to_string(g) + ", got " + std::to_string(cfg_.target_tokens));
            w1_ = Tensor::randn({in, out}, rng, kInitStd, 0.0, true);
            b1_ = Tensor::zeros({out}, true);
            w2_ = Tensor::randn({out, out}, rng, kInitStd, 0.0, true);
            b2_ = Tensor::zeros({out}, true);
            break;
        case ProjectorKind::Ldp:
            if (grid_side % 2 != 0 || cfg_.target_tokens != g / 4)
                throw std::invalid_argument("ldp reduces tokens by exactly 75%: target_tokens must be " +
                                            std::to_string(g / 4) + " on an even grid, got " +
                                            std::to_string(cfg_.target_tokens));
            plan_ = MergePlan{2, 2};
            w1_ = Tensor::randn({in, out}, rng, kInitStd, 0.0, true);
            b1_ = Tensor::zeros({out}, true);
            w2_ = Tensor::randn({out, out}, rng, kInitStd, 0.0, true);
            b2_ = Tensor::zeros({out}, true);
            dw1_ = Tensor::randn({out, 3, 3}, rng, kInitStd, 0.0, true);
            dwb1_ = Tensor::zeros({out}, true);
            pw1_ = Tensor::randn({out, out}, rng, kInitStd, 0.0, true);
            pwb1_ = Tensor::zeros({out}, true);
            dw2_ = Tensor::randn({out, 3, 3}, rng, kInitStd, 0.0, true);
            dwb2_ = Tensor::zeros({out}, true);
            pw2_ = Tensor::randn({out, out}, rng, kInitStd, 0.0, true);
            pwb2_ = Tensor::zeros({out}, true);
            break;
        case ProjectorKind::LdpV2:
            plan_ = merge_plan(grid_side, cfg_.target_tokens);
            w1_ = Tensor::randn({in, out}, rng, kInitStd, 0.0, true);
            b1_ = Tensor::zeros({out}, true);
            w2_ = Tensor::randn({out, out}, rng, kInitStd, 0.0, true);
            b2_ = Tensor::zeros({out}, true);
            dw1_ = Tensor::randn({out, 3, 3}, rng, kInitStd, 0.0, true);
            dwb1_ = Tensor::zeros({out}, true);
            break;
        case ProjectorKind::Xdp: {
            plan_ = merge_plan(grid_side, cfg_.target_tokens);
            const std::int64_t merged = static_cast<std::int64_t>(in) * plan_.pool_h * plan_.pool_w;
            w1_ = Tensor::randn({merged, out}, rng, kInitStd, 0.0, true);
            b1_ = Tensor::zeros({out}, true);
            w2_ = Tensor::randn({out, out}, rng, kInitStd, 0.0, true);
            b2_ = Tensor::zeros({out}, true);
            break;
        }
    }
}

Tensor Projector::project(const VisualFeatures& features) const {
    if (features.tokens.rank() != 2 || features.tokens.extent(1) != cfg_.in_dim)
        throw std::invalid_argument("projector expects features [G x " + std::to_string(cfg_.in_dim) + "], got " +
                                    shape_str(features.tokens.shape()));
    if (features.grid_side != grid_side_ ||
        features.tokens.extent(0) != static_cast<std::int64_t>(grid_side_) * grid_side_)
        throw std::invalid_argument("projector built for a " + std::to_string(grid_side_) + "x" +
                                    std::to_string(grid_side_) + " grid, got grid side " +
                                    std::to_string(features.grid_side));
    const Tensor& z = features.tokens;
    switch (cfg_.kind) {
        case ProjectorKind::Linear:
            return linear(z, w1_, b1_);
        case ProjectorKind::Mlp:
            return linear(gelu(linear(z, w1_, b1_)), w2_, b2_);
        case ProjectorKind::Ldp: {
            Tensor x = linear(gelu(linear(z, w1_, b1_)), w2_, b2_);
            Tensor grid = tokens_to_grid(x, grid_side_);
            // refinement block at full resolution, residual
            Tensor r = pointwise_conv2d(depthwise_conv2d(grid, dw1_, dwb1_, 1, 1), pw1_, pwb1_);
            grid = add(grid, r);
            // stride-2 depthwise conv performs the 75% reduction
            grid = pointwise_conv2d(depthwise_conv2d(grid, dw2_, dwb2_, 2, 1), pw2_, pwb2_);
            return grid_to_tokens(grid);
        }
        case ProjectorKind::LdpV2: {
            Tensor x = linear(gelu(linear(z, w1_, b1_)), w2_, b2_);
            Tensor grid = tokens_to_grid(x, grid_side_);
            grid = average_pool2d(grid, static_cast<int>(plan_.pool_h), static_cast<int>(plan_.pool_w));
            grid = add(grid, depthwise_conv2d(grid, dw1_, dwb1_, 1, 1));  // positional refinement, residual
            return grid_to_tokens(grid);
        }
        case ProjectorKind::Xdp: {
            Tensor merged = window_merge(z, grid_side_, plan_.pool_h, plan_.pool_w);
            return linear(mish(linear(merged, w1_, b1_)), w2_, b2_);
        }
    }
    throw std::logic_error("unknown projector kind");
}

void Projector::visit_params(const std::function<void(const std::string&, Tensor&)>& fn) {
    auto visit = [&](const char* name, Tensor& t) {
        if (t.defined()) fn(name, t);
    };
    visit("w1", w1_);
    visit("b1", b1_);
    visit("w2", w2_);
    visit("b2", b2_);
    visit("dw1.weight", dw1_);
    visit("dw1.bias", dwb1_);
    visit("pw1.weight", pw1_);
    visit("pw1.bias", pwb1_);
    visit("dw2.weight", dw2_);
    visit("dw2.bias", dwb2_);
    visit("pw2.weight", pw2_);
    visit("pw2.bias", pwb2_);
}

std::int64_t Projector::param_count(const ProjectorConfig& cfg, int grid_side) {
    const std::int64_t in = cfg.in_dim, out = cfg.out_dim;
    const std::int64_t affine_in_out = in * out + out;
    const std::int64_t affine_out_out = out * out + out;
    switch (cfg.kind) {
        case ProjectorKind::Linear:
            return affine_in_out;
        case ProjectorKind::Mlp:
            return affine_in_out + affine_out_out;
        case ProjectorKind::Ldp:
            // mlp + 2 x (depthwise 3x3 + bias, pointwise + bias)
            return affine_in_out + affine_out_out + 2 * (out * 9 + out + out * out + out);
        case ProjectorKind::LdpV2:
            return affine_in_out + affine_out_out + (out * 9 + out);
        case ProjectorKind::Xdp: {
            const MergePlan plan = merge_plan(grid_side, cfg.target_tokens);
            return (in * plan.pool_h * plan.pool_w) * out + out + affine_out_out;
        }
    }
    throw std::logic_error("unknown projector kind");
}

std::int64_t Projector::param_count_actual() const {
    std::int64_t n = 0;
    const_cast<Projector*>(this)->visit_params([&](const std::string&, Tensor& t) { n += t.numel(); });
    return n;
}

}  // namespace tinyvlm
