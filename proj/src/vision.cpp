#include "tinyvlm/vision.hpp"

#include <stdexcept>

namespace tinyvlm {

namespace {
constexpr double kInitStd = 0.02;
constexpr double kNormEps = 1e-6;
}

VisionEncoder::VisionEncoder(VisionConfig cfg, std::mt19937_64& rng) : cfg_(cfg) {
    cfg_.validate();
    const int d = cfg_.embed_dim;
    const int patch_dim = 3 * cfg_.patch_size * cfg_.patch_size;
    const int g = cfg_.token_count();
    const int m = d * cfg_.mlp_ratio;

    patch_weight_ = Tensor::randn({patch_dim, d}, rng, kInitStd, 0.0, true);
    patch_bias_ = Tensor::zeros({d}, true);
    pos_emb_ = Tensor::randn({g, d}, rng, kInitStd, 0.0, true);
    for (int l = 0; l < cfg_.num_layers; ++l) {
        Block b;
        b.attn_norm = Tensor::ones({d}, true);
        b.wq = Tensor::randn({d, d}, rng, kInitStd, 0.0, true);
        b.bq = Tensor::zeros({d}, true);
        b.wk = Tensor::randn({d, d}, rng, kInitStd, 0.0, true);
        b.bk = Tensor::zeros({d}, true);
        b.wv = Tensor::randn({d, d}, rng, kInitStd, 0.0, true);
        b.bv = Tensor::zeros({d}, true);
        b.wo = Tensor::randn({d, d}, rng, kInitStd, 0.0, true);
        b.bo = Tensor::zeros({d}, true);
        b.mlp_norm = Tensor::ones({d}, true);
        b.w1 = Tensor::randn({d, m}, rng, kInitStd, 0.0, true);
        b.b1 = Tensor::zeros({m}, true);
        b.w2 = Tensor::randn({m, d}, rng, kInitStd, 0.0, true);
        b.b2 = Tensor::zeros({d}, true);
        blocks_.push_back(std::move(b));
    }
    final_norm_ = Tensor::ones({d}, true);
}

Tensor VisionEncoder::patchify(const Tensor& image, int patch_size) {
    if (image.rank() != 3 || image.extent(0) != 3)
        throw std::invalid_argument("image must be [3 x H x W], got " + shape_str(image.shape()));
    const std::int64_t h = image.extent(1), w = image.extent(2), p = patch_size;
    if (p <= 0 || h % p != 0 || w % p != 0)
        throw std::invalid_argument("image " + shape_str(image.shape()) + " not divisible by patch size " +
                                    std::to_string(p));
    const std::int64_t gh = h / p, gw = w / p;
    const std::int64_t patch_dim = 3 * p * p;
    std::vector<double> out(static_cast<std::size_t>(gh * gw * patch_dim));
    const auto& src = image.data();
    for (std::int64_t gy = 0; gy < gh; ++gy)
        for (std::int64_t gx = 0; gx < gw; ++gx) {
            const std::int64_t row = gy * gw + gx;
            std::int64_t off = row * patch_dim;
            for (std::int64_t c = 0; c < 3; ++c)
                for (std::int64_t py = 0; py < p; ++py)
                    for (std::int64_t px = 0; px < p; ++px)
                        out[static_cast<std::size_t>(off++)] =
                            src[static_cast<std::size_t>((c * h + gy * p + py) * w + gx * p + px)];
        }
    return Tensor::from_data({gh * gw, patch_dim}, std::move(out));
}

Tensor VisionEncoder::patch_embed(const Tensor& image) const {
    if (image.extent(1) != cfg_.image_size || image.extent(2) != cfg_.image_size)
        throw std::invalid_argument("image " + shape_str(image.shape()) + " does not match configured size " +
                                    std::to_string(cfg_.image_size));
    Tensor patches = patchify(image, cfg_.patch_size);
    return add(linear(patches, patch_weight_, patch_bias_), pos_emb_);
}

VisualFeatures VisionEncoder::encode(const Tensor& image) const {
    Tensor x = patch_embed(image);
    for (const auto& b : blocks_) {
        Tensor h = rms_norm(x, b.attn_norm, kNormEps);
        Tensor q = linear(h, b.wq, b.bq);
        Tensor k = linear(h, b.wk, b.bk);
        Tensor v = linear(h, b.wv, b.bv);
        Tensor attn = linear(multihead_attention(q, k, v, cfg_.num_heads, /*causal=*/false), b.wo, b.bo);
        x = add(x, attn);
        Tensor m = rms_norm(x, b.mlp_norm, kNormEps);
        Tensor mlp = linear(gelu(linear(m, b.w1, b.b1)), b.w2, b.b2);
        x = add(x, mlp);
    }
    x = rms_norm(x, final_norm_, kNormEps);
    return VisualFeatures{x, cfg_.grid_side()};
}

void VisionEncoder::visit_params(const std::function<void(const std::string&, Tensor&)>& fn) {
    fn("patch_proj.weight", patch_weight_);
    fn("patch_proj.bias", patch_bias_);
    fn("pos_emb", pos_emb_);
    for (std::size_t l = 0; l < blocks_.size(); ++l) {
        auto& b = blocks_[l];
        const std::string p = "block" + std::to_string(l) + ".";
        fn(p + "attn_norm", b.attn_norm);
        fn(p + "wq", b.wq);
        fn(p + "bq", b.bq);
        fn(p + "wk", b.wk);
        fn(p + "bk", b.bk);
        fn(p + "wv", b.wv);
        fn(p + "bv", b.bv);
        fn(p + "wo", b.wo);
        fn(p + "bo", b.bo);
        fn(p + "mlp_norm", b.mlp_norm);
        fn(p + "w1", b.w1);
        fn(p + "b1", b.b1);
        fn(p + "w2", b.w2);
        fn(p + "b2", b.b2);
    }
    fn("final_norm", final_norm_);
}

std::int64_t VisionEncoder::param_count() const {
    std::int64_t n = 0;
    const_cast<VisionEncoder*>(this)->visit_params([&](const std::string&, Tensor& t) { n += t.numel(); });
    return n;
}

}  // namespace tinyvlm
