#include "tinyvlm/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace tinyvlm {

void VisionConfig::validate() const {
    if (image_size <= 0 || patch_size <= 0 || image_size % patch_size != 0)
        throw std::invalid_argument("vision: image_size " + std::to_string(image_size) +
                                    " must be a positive multiple of patch_size " + std::to_string(patch_size));
    if (embed_dim <= 0 || num_heads <= 0 || embed_dim % num_heads != 0)
        throw std::invalid_argument("vision: embed_dim " + std::to_string(embed_dim) + " must be divisible by " +
                                    std::to_string(num_heads) + " heads");
    if (num_layers <= 0 || mlp_ratio <= 0) throw std::invalid_argument("vision: layers and mlp_ratio must be positive");
}

std::string to_string(ProjectorKind kind) {
    switch (kind) {
        case ProjectorKind::Linear: return "linear";
        case ProjectorKind::Mlp: return "mlp";
        case ProjectorKind::Ldp: return "ldp";
        case ProjectorKind::LdpV2: return "ldpv2";
        case ProjectorKind::Xdp: return "xdp";
    }
    throw std::logic_error("unknown projector kind");
}

ProjectorKind projector_kind_from_string(const std::string& name) {
    std::string s = name;
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    if (s == "linear") return ProjectorKind::Linear;
    if (s == "mlp") return ProjectorKind::Mlp;
    if (s == "ldp") return ProjectorKind::Ldp;
    if (s == "ldpv2") return ProjectorKind::LdpV2;
    if (s == "xdp") return ProjectorKind::Xdp;
    throw std::invalid_argument("unknown projector kind '" + name + "' (expected linear|mlp|ldp|ldpv2|xdp)");
}

int LMConfig::ffn_dim() const {
    if (ffn_hidden > 0) return ffn_hidden;
    const int raw = (8 * hidden_size) / 3;
    return ((raw + 15) / 16) * 16;  // round up to a multiple of 16
}

void LMConfig::validate() const {
    if (vocab_size <= 0) throw std::invalid_argument("lm: vocab_size must be positive");
    if (hidden_size <= 0 || num_heads <= 0 || hidden_size % num_heads != 0)
        throw std::invalid_argument("lm: hidden_size " + std::to_string(hidden_size) + " must be divisible by " +
                                    std::to_string(num_heads) + " heads");
    if ((hidden_size / num_heads) % 2 != 0)
        throw std::invalid_argument("lm: head dim must be even for rotary embeddings");
    if (num_layers <= 0 || max_context <= 0) throw std::invalid_argument("lm: layers and max_context must be positive");
}

ModelConfig ModelConfig::toy(int vocab_size) {
    ModelConfig cfg;
    cfg.vision = VisionConfig{32, 8, 32, 2, 4, 4};
    cfg.lm = LMConfig{};
    cfg.lm.vocab_size = vocab_size;
    cfg.projector = ProjectorConfig{ProjectorKind::Xdp, cfg.vision.embed_dim, cfg.lm.hidden_size, 4};
    return cfg;
}

ModelConfig ModelConfig::paper_shape(int vocab_size) {
    ModelConfig cfg;
    cfg.vision = VisionConfig{336, 14, 64, 2, 4, 4};  // 24x24 grid, slimmed dims
    cfg.lm = LMConfig{};
    cfg.lm.vocab_size = vocab_size;
    cfg.lm.hidden_size = 2048;
    cfg.lm.num_heads = 32;
    cfg.lm.num_layers = 24;
    cfg.lm.max_context = 4096;
    cfg.projector = ProjectorConfig{ProjectorKind::Xdp, cfg.vision.embed_dim, cfg.lm.hidden_size, 144};
    return cfg;
}

void ModelConfig::validate() const {
    vision.validate();
    lm.validate();
    if (projector.in_dim != vision.embed_dim)
        throw std::invalid_argument("projector.in_dim must equal vision.embed_dim");
    if (projector.out_dim != lm.hidden_size)
        throw std::invalid_argument("projector.out_dim must equal lm.hidden_size");
    if (projector.target_tokens <= 0 || projector.target_tokens > vision.token_count())
        throw std::invalid_argument("projector.target_tokens must lie in [1, " +
                                    std::to_string(vision.token_count()) + "]");
}

std::vector<std::string> StageConfig::trainable_groups() const {
    if (stage == 1) return {"projector"};
    if (stage == 2) return {"projector", "language_model"};
    throw std::invalid_argument("stage must be 1 or 2");
}

void StageConfig::validate() const {
    trainable_groups();
    if (learning_rate < 0 || batch_size <= 0 || epochs < 0)
        throw std::invalid_argument("stage config: bad learning_rate/batch_size/epochs");
}

std::pair<StageConfig, StageConfig> default_stage_configs() {
    StageConfig s1;
    s1.stage = 1;
    s1.learning_rate = 1e-3;
    s1.batch_size = 64;
    s1.epochs = 1;
    StageConfig s2;
    s2.stage = 2;
    s2.learning_rate = 4e-5;
    s2.batch_size = 32;
    s2.epochs = 1;
    return {s1, s2};
}

std::map<std::string, std::string> parse_kv_text(const std::string& text) {
    std::map<std::string, std::string> out;
    std::istringstream is(text);
    std::string line, section;
    auto trim = [](std::string s) {
        const auto a = s.find_first_not_of(" \t\r");
        const auto b = s.find_last_not_of(" \t\r");
        return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[' && line.back() == ']') {
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (!value.empty() && value.front() == '"' && value.back() == '"' && value.size() >= 2)
            value = value.substr(1, value.size() - 2);
        out[section.empty() ? key : section + "." + key] = value;
    }
    return out;
}

std::map<std::string, std::string> parse_kv_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open config file " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return parse_kv_text(ss.str());
}

namespace {

template <typename T>
void set_int(const std::map<std::string, std::string>& kv, const std::string& key, T& field) {
    auto it = kv.find(key);
    if (it != kv.end()) field = static_cast<T>(std::stoll(it->second));
}

void set_double(const std::map<std::string, std::string>& kv, const std::string& key, double& field) {
    auto it = kv.find(key);
    if (it != kv.end()) field = std::stod(it->second);
}

}  // namespace

void apply_model_config(const std::map<std::string, std::string>& kv, ModelConfig& cfg) {
    set_int(kv, "vision.image_size", cfg.vision.image_size);
    set_int(kv, "vision.patch_size", cfg.vision.patch_size);
    set_int(kv, "vision.embed_dim", cfg.vision.embed_dim);
    set_int(kv, "vision.num_layers", cfg.vision.num_layers);
    set_int(kv, "vision.num_heads", cfg.vision.num_heads);
    set_int(kv, "vision.mlp_ratio", cfg.vision.mlp_ratio);
    if (auto it = kv.find("projector.kind"); it != kv.end()) cfg.projector.kind = projector_kind_from_string(it->second);
    set_int(kv, "projector.target_tokens", cfg.projector.target_tokens);
    set_int(kv, "lm.vocab_size", cfg.lm.vocab_size);
    set_int(kv, "lm.hidden_size", cfg.lm.hidden_size);
    set_int(kv, "lm.num_heads", cfg.lm.num_heads);
    set_int(kv, "lm.num_layers", cfg.lm.num_layers);
    set_int(kv, "lm.max_context", cfg.lm.max_context);
    set_int(kv, "lm.ffn_hidden", cfg.lm.ffn_hidden);
    set_double(kv, "lm.rope_base", cfg.lm.rope_base);
    cfg.projector.in_dim = cfg.vision.embed_dim;
    cfg.projector.out_dim = cfg.lm.hidden_size;
}

void apply_stage_config(const std::map<std::string, std::string>& kv, const std::string& prefix, StageConfig& cfg) {
    set_double(kv, prefix + ".learning_rate", cfg.learning_rate);
    set_int(kv, prefix + ".batch_size", cfg.batch_size);
    set_int(kv, prefix + ".epochs", cfg.epochs);
    set_double(kv, prefix + ".beta1", cfg.beta1);
    set_double(kv, prefix + ".beta2", cfg.beta2);
    set_double(kv, prefix + ".eps", cfg.eps);
    set_double(kv, prefix + ".weight_decay", cfg.weight_decay);
}

}  // namespace tinyvlm
