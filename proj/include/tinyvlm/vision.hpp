#pragma once

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "tinyvlm/config.hpp"
#include "tinyvlm/tensor.hpp"

namespace tinyvlm {

// Per-patch features Z_v: one row per grid slot, row-major over the patch
// grid.
struct VisualFeatures {
    Tensor tokens;  // [G x embed_dim]
    int grid_side = 0;
};

// ViT-style encoder over fixed-size patches: flatten + linear projection +
// learned position embeddings, then pre-norm blocks with bidirectional
// attention and a GELU MLP. No CLS token; every patch token is forwarded.
class VisionEncoder {
public:
    VisionEncoder(VisionConfig cfg, std::mt19937_64& rng);

    const VisionConfig& config() const { return cfg_; }

    // image is [3 x H x W] with values in [0,1]; gradients never flow into it.
    Tensor patch_embed(const Tensor& image) const;
    VisualFeatures encode(const Tensor& image) const;

    void visit_params(const std::function<void(const std::string&, Tensor&)>& fn);
    std::int64_t param_count() const;

    // Rearranges image pixels into one flattened row per patch (row-major
    // grid order, channel-major within a patch). Pure data movement.
    static Tensor patchify(const Tensor& image, int patch_size);

private:
    struct Block {
        Tensor attn_norm;
        Tensor wq, bq, wk, bk, wv, bv, wo, bo;
        Tensor mlp_norm;
        Tensor w1, b1, w2, b2;
    };

    VisionConfig cfg_;
    Tensor patch_weight_;  // [3*p*p x embed_dim]
    Tensor patch_bias_;
    Tensor pos_emb_;       // [G x embed_dim]
    std::vector<Block> blocks_;
    Tensor final_norm_;
};

}  // namespace tinyvlm
