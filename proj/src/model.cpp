#include "tinyvlm/model.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "tinyvlm/serialize.hpp"

namespace fs = std::filesystem;

namespace tinyvlm {

namespace {

VisionEncoder make_vision(const ModelConfig& cfg, std::mt19937_64& rng) { return VisionEncoder(cfg.vision, rng); }

Projector make_projector(const ModelConfig& cfg, std::mt19937_64& rng) {
    return Projector(cfg.projector, cfg.vision.grid_side(), rng);
}

LanguageModel make_lm(const ModelConfig& cfg, std::mt19937_64& rng) { return LanguageModel(cfg.lm, rng); }

}  // namespace

VlmModel::VlmModel(ModelConfig cfg, std::uint64_t seed)
    : cfg_((cfg.validate(), cfg)),
      vision_([&] {
          std::mt19937_64 rng(seed);
          return make_vision(cfg_, rng);
      }()),
      projector_([&] {
          std::mt19937_64 rng(seed + 1);
          return make_projector(cfg_, rng);
      }()),
      lm_([&] {
          std::mt19937_64 rng(seed + 2);
          return make_lm(cfg_, rng);
      }()) {}

std::vector<std::pair<std::string, Tensor>> VlmModel::named_parameters() {
    std::vector<std::pair<std::string, Tensor>> out;
    vision_.visit_params([&](const std::string& n, Tensor& t) { out.emplace_back(std::string(kGroupVision) + "." + n, t); });
    projector_.visit_params(
        [&](const std::string& n, Tensor& t) { out.emplace_back(std::string(kGroupProjector) + "." + n, t); });
    lm_.visit_params(
        [&](const std::string& n, Tensor& t) { out.emplace_back(std::string(kGroupLanguageModel) + "." + n, t); });
    return out;
}

std::vector<std::pair<std::string, Tensor>> VlmModel::group_parameters(const std::string& group) {
    std::vector<std::pair<std::string, Tensor>> out;
    for (auto& [name, t] : named_parameters())
        if (name.rfind(group + ".", 0) == 0) out.emplace_back(name, t);
    if (out.empty()) throw std::invalid_argument("unknown parameter group '" + group + "'");
    return out;
}

std::int64_t VlmModel::param_count() {
    std::int64_t n = 0;
    for (auto& [name, t] : named_parameters()) n += t.numel();
    return n;
}

Tensor VlmModel::encode_and_splice(const Tensor& image, const EncodedSequence& seq) const {
    if (seq.image_slot < 0 || seq.image_slot >= seq.length() ||
        seq.ids[static_cast<std::size_t>(seq.image_slot)] != Vocabulary::image_id)
        throw std::invalid_argument("sample has no image placeholder");
    VisualFeatures features = vision_.encode(image);
    Tensor visual = projector_.project(features);
    Tensor text = lm_.embed_tokens(seq.ids);
    return splice_visual(text, visual, seq.image_slot, cfg_.lm.max_context);
}

Tensor VlmModel::compute_logits(const Tensor& image, const EncodedSequence& seq) const {
    return lm_.forward(encode_and_splice(image, seq));
}

Tensor VlmModel::sample_loss(const Tensor& image, const EncodedSequence& seq) const {
    Tensor logits = compute_logits(image, seq);
    ShiftedTargets st = spliced_shift_targets(seq, cfg_.projector.target_tokens);
    Tensor shifted = slice(logits, 0, 0, logits.extent(0) - 1);
    return cross_entropy_masked(shifted, st.targets, st.target_mask);
}

namespace {

void write_manifest(const std::string& path, const ModelConfig& cfg) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write manifest " + path);
    os << "vision.image_size = " << cfg.vision.image_size << "\n";
    os << "vision.patch_size = " << cfg.vision.patch_size << "\n";
    os << "vision.embed_dim = " << cfg.vision.embed_dim << "\n";
    os << "vision.num_layers = " << cfg.vision.num_layers << "\n";
    os << "vision.num_heads = " << cfg.vision.num_heads << "\n";
    os << "vision.mlp_ratio = " << cfg.vision.mlp_ratio << "\n";
    os << "projector.kind = " << to_string(cfg.projector.kind) << "\n";
    os << "projector.target_tokens = " << cfg.projector.target_tokens << "\n";
    os << "lm.vocab_size = " << cfg.lm.vocab_size << "\n";
    os << "lm.hidden_size = " << cfg.lm.hidden_size << "\n";
    os << "lm.num_heads = " << cfg.lm.num_heads << "\n";
    os << "lm.num_layers = " << cfg.lm.num_layers << "\n";
    os << "lm.max_context = " << cfg.lm.max_context << "\n";
    os << "lm.ffn_hidden = " << cfg.lm.ffn_hidden << "\n";
    os << "lm.rope_base = " << cfg.lm.rope_base << "\n";
}

}  // namespace

void VlmModel::save_checkpoint(const std::string& dir) const {
    fs::create_directories(dir);
    write_manifest((fs::path(dir) / "manifest.txt").string(), cfg_);
    auto& self = const_cast<VlmModel&>(*this);
    for (auto& [name, t] : self.named_parameters()) save_tensor((fs::path(dir) / (name + ".bin")).string(), t);
}

VlmModel VlmModel::load_checkpoint(const std::string& dir) {
    const auto manifest = (fs::path(dir) / "manifest.txt").string();
    if (!fs::exists(manifest)) throw std::runtime_error("checkpoint " + dir + " has no manifest.txt");
    ModelConfig cfg;
    apply_model_config(parse_kv_file(manifest), cfg);
    VlmModel model(cfg, /*seed=*/0);
    for (auto& [name, t] : model.named_parameters()) {
        const auto path = (fs::path(dir) / (name + ".bin")).string();
        if (!fs::exists(path)) throw std::runtime_error("checkpoint missing tensor file " + path);
        Tensor loaded = load_tensor(path);
        if (loaded.shape() != t.shape())
            throw std::runtime_error("checkpoint tensor " + name + " has shape " + shape_str(loaded.shape()) +
                                     ", expected " + shape_str(t.shape()));
        t.data() = loaded.data();
    }
    return model;
}

Tensor normalize_image(const Tensor& image) {
    std::vector<double> d(image.data().size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = (image.data()[i] - 0.5) / 0.5;
    return Tensor::from_data(image.shape(), std::move(d));
}

}  // namespace tinyvlm
