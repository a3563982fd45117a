#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace tinyvlm {

struct VisionConfig {
    int image_size = 32;
    int patch_size = 8;
    int embed_dim = 32;
    int num_layers = 2;
    int num_heads = 4;
    int mlp_ratio = 4;

    int grid_side() const { return image_size / patch_size; }
    int token_count() const { return grid_side() * grid_side(); }
    void validate() const;
};

enum class ProjectorKind { Linear, Mlp, Ldp, LdpV2, Xdp };

std::string to_string(ProjectorKind kind);
ProjectorKind projector_kind_from_string(const std::string& name);

struct ProjectorConfig {
    ProjectorKind kind = ProjectorKind::Xdp;
    int in_dim = 32;
    int out_dim = 64;
    int target_tokens = 4;
};

struct LMConfig {
    int vocab_size = 0;
    int hidden_size = 64;
    int num_heads = 4;
    int num_layers = 2;
    int max_context = 256;
    double rope_base = 10000.0;
    int ffn_hidden = 0;  // 0 = derive from hidden_size

    int ffn_dim() const;
    void validate() const;
};

struct ModelConfig {
    VisionConfig vision;
    ProjectorConfig projector;
    LMConfig lm;

    // Toy defaults: 32x32 image, patch 8 (4x4 grid), hidden 64, 2 layers.
    static ModelConfig toy(int vocab_size);
    // Shapes from the full-scale setup (336/14 grid, hidden 2048, 24 layers);
    // used for shape and merge-plan checks, not for training.
    static ModelConfig paper_shape(int vocab_size);

    void validate() const;
};

struct StageConfig {
    int stage = 1;  // 1: projector only; 2: projector + language model
    double learning_rate = 1e-3;
    int batch_size = 64;
    int epochs = 1;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;

    std::vector<std::string> trainable_groups() const;
    void validate() const;
};

// Stage hyperparameters as published: stage 1 lr 1e-3 / batch 64, stage 2
// lr 4e-5 / batch 32, AdamW betas (0.9, 0.999), eps 1e-8, weight decay 0,
// one epoch each.
std::pair<StageConfig, StageConfig> default_stage_configs();

// TOML-style key=value files; [section] headers prefix keys with "section.".
std::map<std::string, std::string> parse_kv_file(const std::string& path);
std::map<std::string, std::string> parse_kv_text(const std::string& text);

void apply_model_config(const std::map<std::string, std::string>& kv, ModelConfig& cfg);
void apply_stage_config(const std::map<std::string, std::string>& kv, const std::string& prefix, StageConfig& cfg);

}  // namespace tinyvlm
