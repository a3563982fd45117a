#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tinyvlm/config.hpp"
#include "tinyvlm/lm.hpp"
#include "tinyvlm/projector.hpp"
#include "tinyvlm/sequence.hpp"
#include "tinyvlm/vision.hpp"

namespace tinyvlm {

inline constexpr const char* kGroupVision = "vision_encoder";
inline constexpr const char* kGroupProjector = "projector";
inline constexpr const char* kGroupLanguageModel = "language_model";

// The full pipeline: vision encoder -> projector -> causal decoder.
// Parameter names are prefixed with their group ("vision_encoder.",
// "projector.", "language_model.") so the trainer can freeze by group.
class VlmModel {
public:
    VlmModel(ModelConfig cfg, std::uint64_t seed);

    const ModelConfig& config() const { return cfg_; }
    VisionEncoder& vision() { return vision_; }
    Projector& projector() { return projector_; }
    LanguageModel& lm() { return lm_; }
    const LanguageModel& lm() const { return lm_; }

    std::vector<std::pair<std::string, Tensor>> named_parameters();
    std::vector<std::pair<std::string, Tensor>> group_parameters(const std::string& group);
    std::int64_t param_count();

    // image is the normalized [3 x H x W] input; seq must carry the image
    // placeholder. Returns the [L_spliced x hidden] embedding matrix.
    Tensor encode_and_splice(const Tensor& image, const EncodedSequence& seq) const;
    // Logits over the spliced sequence.
    Tensor compute_logits(const Tensor& image, const EncodedSequence& seq) const;
    // Per-sample masked objective: mean NLL of supervised next tokens.
    Tensor sample_loss(const Tensor& image, const EncodedSequence& seq) const;

    void save_checkpoint(const std::string& dir) const;
    static VlmModel load_checkpoint(const std::string& dir);

private:
    ModelConfig cfg_;
    VisionEncoder vision_;
    Projector projector_;
    LanguageModel lm_;
};

// (x - 0.5) / 0.5 per channel: maps [0,1] pixel data onto [-1,1].
Tensor normalize_image(const Tensor& image);

}  // namespace tinyvlm
