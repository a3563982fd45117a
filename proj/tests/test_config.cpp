#include <stdexcept>
#include <doctest.h>

#include "tinyvlm/config.hpp"

using namespace tinyvlm;

TEST_CASE("key=value parsing with sections, comments, and quotes") {
    const std::string text = R"(
# a comment
top = 1
[vision]
image_size = 32   # trailing comment
patch_size = 8
[lm]
hidden_size = 64
name = "quoted value"
)";
    auto kv = parse_kv_text(text);
    CHECK(kv.at("top") == "1");
    CHECK(kv.at("vision.image_size") == "32");
    CHECK(kv.at("vision.patch_size") == "8");
    CHECK(kv.at("lm.hidden_size") == "64");
    CHECK(kv.at("lm.name") == "quoted value");
    CHECK_THROWS_AS(parse_kv_text("not a key value line"), std::invalid_argument);
}

TEST_CASE("model config application keeps the towers dimensionally consistent") {
    ModelConfig cfg = ModelConfig::toy(100);
    auto kv = parse_kv_text("[lm]\nhidden_size = 48\nnum_heads = 4\n[vision]\nembed_dim = 24\n[projector]\nkind = ldpv2\ntarget_tokens = 4\n");
    apply_model_config(kv, cfg);
    CHECK(cfg.lm.hidden_size == 48);
    CHECK(cfg.projector.out_dim == 48);
    CHECK(cfg.projector.in_dim == 24);
    CHECK(cfg.projector.kind == ProjectorKind::LdpV2);
    cfg.validate();
}

TEST_CASE("toy and paper-shape presets validate") {
    ModelConfig toy = ModelConfig::toy(64);
    toy.validate();
    CHECK(toy.vision.grid_side() == 4);
    CHECK(toy.vision.token_count() == 16);
    CHECK(toy.lm.hidden_size == 64);
    CHECK(toy.lm.num_layers == 2);

    ModelConfig paper = ModelConfig::paper_shape(64);
    paper.validate();
    CHECK(paper.vision.grid_side() == 24);
    CHECK(paper.vision.token_count() == 576);
    CHECK(paper.projector.target_tokens == 144);
    CHECK(paper.lm.hidden_size == 2048);
    CHECK(paper.lm.num_heads == 32);
    CHECK(paper.lm.num_layers == 24);
    CHECK(paper.lm.max_context == 4096);
}

TEST_CASE("ffn width derives from hidden size unless pinned") {
    LMConfig cfg;
    cfg.vocab_size = 10;
    cfg.hidden_size = 64;
    CHECK(cfg.ffn_dim() == 176);  // ceil(8*64/3 / 16) * 16
    cfg.ffn_hidden = 100;
    CHECK(cfg.ffn_dim() == 100);
}

TEST_CASE("projector kind names round-trip") {
    for (auto kind : {ProjectorKind::Linear, ProjectorKind::Mlp, ProjectorKind::Ldp, ProjectorKind::LdpV2,
                      ProjectorKind::Xdp})
        CHECK(projector_kind_from_string(to_string(kind)) == kind);
    CHECK(projector_kind_from_string("XDP") == ProjectorKind::Xdp);
    CHECK_THROWS_AS(projector_kind_from_string("qformer"), std::invalid_argument);
}

TEST_CASE("config validation rejects inconsistent settings") {
    ModelConfig cfg = ModelConfig::toy(50);
    cfg.projector.target_tokens = 17;  // above the 16-token grid
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);

    LMConfig odd;
    odd.vocab_size = 10;
    odd.hidden_size = 6;
    odd.num_heads = 2;  // head dim 3, rotary needs even
    CHECK_THROWS_AS(odd.validate(), std::invalid_argument);
}
