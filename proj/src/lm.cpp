#include "tinyvlm/lm.hpp"

#include <algorithm>
#include <chrono>
#include <stdexcept>

namespace tinyvlm {

namespace {
constexpr double kInitStd = 0.02;
constexpr double kNormEps = 1e-6;
}

LanguageModel::LanguageModel(LMConfig cfg, std::mt19937_64& rng) : cfg_(cfg) {
    cfg_.validate();
    const int d = cfg_.hidden_size;
    const int f = cfg_.ffn_dim();
    tok_emb_ = Tensor::randn({cfg_.vocab_size, d}, rng, kInitStd, 0.0, true);
    for (int l = 0; l < cfg_.num_layers; ++l) {
        Block b;
        b.attn_norm = Tensor::ones({d}, true);
        b.wq = Tensor::randn({d, d}, rng, kInitStd, 0.0, true);
        b.wk = Tensor::randn({d, d}, rng, kInitStd, 0.0, true);
        b.wv = Tensor::randn({d, d}, rng, kInitStd, 0.0, true);
        b.wo = Tensor::randn({d, d}, rng, kInitStd, 0.0, true);
        b.mlp_norm = Tensor::ones({d}, true);
        b.w_gate = Tensor::randn({d, f}, rng, kInitStd, 0.0, true);
        b.w_up = Tensor::randn({d, f}, rng, kInitStd, 0.0, true);
        b.w_down = Tensor::randn({f, d}, rng, kInitStd, 0.0, true);
        blocks_.push_back(std::move(b));
    }
    final_norm_ = Tensor::ones({d}, true);
    lm_head_ = Tensor::randn({d, cfg_.vocab_size}, rng, kInitStd, 0.0, true);
}

Tensor LanguageModel::embed_tokens(const std::vector<std::int64_t>& ids) const {
    return embedding_lookup(tok_emb_, ids);
}

Tensor LanguageModel::forward(const Tensor& seq) const {
    if (seq.rank() != 2 || seq.extent(1) != cfg_.hidden_size)
        throw std::invalid_argument("forward expects [L x " + std::to_string(cfg_.hidden_size) + "], got " +
                                    shape_str(seq.shape()));
    if (seq.extent(0) > cfg_.max_context)
        throw std::invalid_argument("sequence length " + std::to_string(seq.extent(0)) + " exceeds max_context " +
                                    std::to_string(cfg_.max_context));
    Tensor x = seq;
    for (const auto& b : blocks_) {
        Tensor h = rms_norm(x, b.attn_norm, kNormEps);
        Tensor q = rope(matmul(h, b.wq), cfg_.num_heads, cfg_.rope_base);
        Tensor k = rope(matmul(h, b.wk), cfg_.num_heads, cfg_.rope_base);
        Tensor v = matmul(h, b.wv);
        Tensor attn = matmul(multihead_attention(q, k, v, cfg_.num_heads, /*causal=*/true), b.wo);
        x = add(x, attn);
        Tensor m = rms_norm(x, b.mlp_norm, kNormEps);
        Tensor mlp = matmul(mul(silu(matmul(m, b.w_gate)), matmul(m, b.w_up)), b.w_down);
        x = add(x, mlp);
    }
    return matmul(rms_norm(x, final_norm_, kNormEps), lm_head_);
}

GenerationResult LanguageModel::generate(const Tensor& prefix, int max_new, std::int64_t stop_id) const {
    if (!prefix.defined() || prefix.rank() != 2 || prefix.extent(0) == 0)
        throw std::invalid_argument("generate requires a nonempty [L x hidden] prefix");
    GenerationResult result;
    if (max_new <= 0) return result;

    Tensor seq = prefix.clone();
    const auto start = std::chrono::steady_clock::now();
    for (int step = 0; step < max_new; ++step) {
        if (seq.extent(0) + 1 > cfg_.max_context)
            throw std::runtime_error("generation truncated: context length " + std::to_string(seq.extent(0)) +
                                     " reached max_context " + std::to_string(cfg_.max_context));
        Tensor logits = forward(seq);
        const std::int64_t last = logits.extent(0) - 1;
        std::int64_t best = 0;
        double best_v = logits.at(last, 0);
        for (std::int64_t j = 1; j < logits.extent(1); ++j) {
            const double v = logits.at(last, j);
            if (v > best_v) {
                best_v = v;
                best = j;
            }
        }
        result.ids.push_back(best);
        if (best == stop_id) break;
        seq = concat({seq, embed_tokens({best})}, 0);
    }
    const auto end = std::chrono::steady_clock::now();
    result.decode_seconds = std::chrono::duration<double>(end - start).count();
    result.tokens_per_second =
        result.decode_seconds > 0.0 ? static_cast<double>(result.ids.size()) / result.decode_seconds : 0.0;
    return result;
}

void LanguageModel::visit_params(const std::function<void(const std::string&, Tensor&)>& fn) {
    fn("tok_emb", tok_emb_);
    for (std::size_t l = 0; l < blocks_.size(); ++l) {
        auto& b = blocks_[l];
        const std::string p = "block" + std::to_string(l) + ".";
        fn(p + "attn_norm", b.attn_norm);
        fn(p + "wq", b.wq);
        fn(p + "wk", b.wk);
        fn(p + "wv", b.wv);
        fn(p + "wo", b.wo);
        fn(p + "mlp_norm", b.mlp_norm);
        fn(p + "w_gate", b.w_gate);
        fn(p + "w_up", b.w_up);
        fn(p + "w_down", b.w_down);
    }
    fn("final_norm", final_norm_);
    fn("lm_head", lm_head_);
}

std::int64_t LanguageModel::param_count() const {
    std::int64_t n = 0;
    const_cast<LanguageModel*>(this)->visit_params([&](const std::string&, Tensor& t) { n += t.numel(); });
    return n;
}

std::int64_t LanguageModel::param_count(const LMConfig& cfg) {
    const std::int64_t d = cfg.hidden_size, v = cfg.vocab_size, f = cfg.ffn_dim();
    const std::int64_t per_block = d          // attn_norm
                                   + 4 * d * d  // wq wk wv wo
                                   + d          // mlp_norm
                                   + 2 * d * f  // w_gate w_up
                                   + f * d;     // w_down
    return v * d + cfg.num_layers * per_block + d + d * v;
}

Tensor splice_visual(const Tensor& text_emb, const Tensor& visual, std::int64_t at, std::int64_t max_context) {
    if (text_emb.rank() != 2 || visual.rank() != 2 || text_emb.extent(1) != visual.extent(1))
        throw std::invalid_argument("splice_visual: embeddings must share the hidden size, got " +
                                    shape_str(text_emb.shape()) + " and " + shape_str(visual.shape()));
    const std::int64_t l = text_emb.extent(0), t = visual.extent(0);
    if (at < 0 || at >= l)
        throw std::invalid_argument("splice_visual: missing placeholder (position " + std::to_string(at) +
                                    " outside sequence of length " + std::to_string(l) + ")");
    if (l - 1 + t > max_context)
        throw std::invalid_argument("splice_visual: spliced length " + std::to_string(l - 1 + t) +
                                    " exceeds max_context " + std::to_string(max_context));
    std::vector<Tensor> parts;
    if (at > 0) parts.push_back(slice(text_emb, 0, 0, at));
    parts.push_back(visual);
    if (at + 1 < l) parts.push_back(slice(text_emb, 0, at + 1, l));
    return concat(parts, 0);
}

}  // namespace tinyvlm
