#pragma once

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "tinyvlm/config.hpp"
#include "tinyvlm/tensor.hpp"

namespace tinyvlm {

struct GenerationResult {
    std::vector<std::int64_t> ids;
    double decode_seconds = 0.0;
    double tokens_per_second = 0.0;
};

// Causal decoder: pre-norm blocks of RMS-norm, rotary multi-head attention,
// RMS-norm, SwiGLU MLP; final norm and an untied output head.
class LanguageModel {
public:
    LanguageModel(LMConfig cfg, std::mt19937_64& rng);

    const LMConfig& config() const { return cfg_; }

    Tensor embed_tokens(const std::vector<std::int64_t>& ids) const;
    Tensor forward(const Tensor& seq) const;  // [L x hidden] -> [L x vocab]

    // Greedy decoding without KV caching: each step recomputes the full
    // prefix. Halts on stop_id or after max_new tokens. The generated ids
    // include the stop token when it fires. Timing covers only the decode
    // loop, matching a tokens-per-second measurement that excludes
    // preprocessing.
    GenerationResult generate(const Tensor& prefix, int max_new, std::int64_t stop_id) const;

    void visit_params(const std::function<void(const std::string&, Tensor&)>& fn);
    std::int64_t param_count() const;

    // Closed-form parameter count for the block layout above.
    static std::int64_t param_count(const LMConfig& cfg);

private:
    struct Block {
        Tensor attn_norm;
        Tensor wq, wk, wv, wo;
        Tensor mlp_norm;
        Tensor w_gate, w_up, w_down;
    };

    LMConfig cfg_;
    Tensor tok_emb_;     // [vocab x hidden]
    std::vector<Block> blocks_;
    Tensor final_norm_;
    Tensor lm_head_;     // [hidden x vocab]
};

// Replaces the single placeholder embedding at `at` with the visual token
// rows; text order is otherwise preserved. Result length is L_text - 1 + T.
Tensor splice_visual(const Tensor& text_emb, const Tensor& visual, std::int64_t at, std::int64_t max_context);

}  // namespace tinyvlm
