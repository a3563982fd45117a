#include <random>
#include <set>

#include <doctest.h>

#include "gradcheck.hpp"
#include "tinyvlm/projector.hpp"

using namespace tinyvlm;
using tinyvlm::testing::gradcheck;
using tinyvlm::testing::random_tensor;

namespace {

VisualFeatures features_for(int grid_side, int dim, std::uint64_t seed) {
    return VisualFeatures{random_tensor({static_cast<std::int64_t>(grid_side) * grid_side, dim}, seed), grid_side};
}

Projector make(ProjectorKind kind, int in, int out, int target, int grid_side, std::uint64_t seed = 1) {
    std::mt19937_64 rng(seed);
    return Projector(ProjectorConfig{kind, in, out, target}, grid_side, rng);
}

}  // namespace

TEST_CASE("merge plans on the 24x24 grid") {
    CHECK(merge_plan(24, 144).pool_h == 2);
    CHECK(merge_plan(24, 144).pool_w == 2);
    CHECK(merge_plan(24, 576).pool_h == 1);
    CHECK(merge_plan(24, 576).pool_w == 1);
    CHECK(merge_plan(24, 1).pool_h == 24);
    CHECK(merge_plan(24, 1).pool_w == 24);
    CHECK(merge_plan(24, 64).pool_h == 3);
    CHECK(merge_plan(24, 64).pool_w == 3);
    // 8 tokens need a rectangular window; ties prefer the larger pool_h
    CHECK(merge_plan(24, 8).pool_h == 12);
    CHECK(merge_plan(24, 8).pool_w == 6);

    // the full published token ladder has a plan on this grid
    for (std::int64_t count : {576, 288, 144, 72, 64, 36, 18, 8, 4, 2, 1}) {
        MergePlan plan = merge_plan(24, count);
        CHECK(24 % plan.pool_h == 0);
        CHECK(24 % plan.pool_w == 0);
        CHECK((24 / plan.pool_h) * (24 / plan.pool_w) == count);
    }
}

TEST_CASE("merge plan identities and failure mode") {
    for (std::int64_t g = 1; g <= 16; ++g) {
        CHECK(merge_plan(g, g * g).pool_h == 1);
        CHECK(merge_plan(g, g * g).pool_w == 1);
        CHECK(merge_plan(g, 1).pool_h == g);
        CHECK(merge_plan(g, 1).pool_w == g);
    }
    CHECK_THROWS_WITH_AS(merge_plan(24, 100), doctest::Contains("valid counts"), std::invalid_argument);
    // independent route: every advertised valid count really has a plan
    for (auto count : valid_token_counts(24)) CHECK_NOTHROW(merge_plan(24, count));
}

TEST_CASE("xdp yields exactly 144 tokens from 576 (75% reduction)") {
    Projector p = make(ProjectorKind::Xdp, 8, 8, 144, 24);
    Tensor out = p.project(features_for(24, 8, 2));
    CHECK(out.shape() == Shape{144, 8});
    CHECK(1.0 - 144.0 / 576.0 == doctest::Approx(0.75));
}

TEST_CASE("linear projector is an affine map per token") {
    Projector p = make(ProjectorKind::Linear, 6, 10, 16, 4);
    VisualFeatures f = features_for(4, 6, 3);
    Tensor out = p.project(f);
    CHECK(out.shape() == Shape{16, 10});

    // recompute row 0 by hand from the weights
    Tensor w, b;
    p.visit_params([&](const std::string& name, Tensor& t) {
        if (name == "w1") w = t;
        if (name == "b1") b = t;
    });
    for (int j = 0; j < 10; ++j) {
        double acc = b.at(j);
        for (int c = 0; c < 6; ++c) acc += f.tokens.at(0, c) * w.at(c, j);
        CHECK(out.at(0, j) == doctest::Approx(acc).epsilon(1e-12));
    }
}

TEST_CASE("xdp on a constant grid with identity second layer emits identical tokens") {
    Projector p = make(ProjectorKind::Xdp, 4, 5, 4, 4);
    p.visit_params([&](const std::string& name, Tensor& t) {
        if (name == "b1") std::fill(t.data().begin(), t.data().end(), 0.0);
        if (name == "b2") std::fill(t.data().begin(), t.data().end(), 0.0);
        if (name == "w2") {
            std::fill(t.data().begin(), t.data().end(), 0.0);
            for (int i = 0; i < 5; ++i) t.set(i, i, 1.0);
        }
    });
    VisualFeatures constant{Tensor::full({16, 4}, 0.37), 4};
    Tensor out = p.project(constant);
    CHECK(out.shape() == Shape{4, 5});
    for (int r = 1; r < 4; ++r)
        for (int c = 0; c < 5; ++c) CHECK(out.at(r, c) == out.at(0, c));
}

TEST_CASE("parameter counts match the closed form and the actual weights") {
    // linear 32 -> 64
    ProjectorConfig linear{ProjectorKind::Linear, 32, 64, 16};
    CHECK(Projector::param_count(linear, 4) == 2112);
    // mlp 32 -> 64 -> 64
    ProjectorConfig mlp{ProjectorKind::Mlp, 32, 64, 16};
    CHECK(Projector::param_count(mlp, 4) == 6272);
    // xdp with a 2x2 window: (32*4)*64 + 64 + 64*64 + 64
    ProjectorConfig xdp{ProjectorKind::Xdp, 32, 64, 4};
    CHECK(Projector::param_count(xdp, 4) == 12416);

    std::mt19937_64 rng(4);
    for (auto cfg : {linear, mlp, xdp}) {
        Projector p(cfg, 4, rng);
        CHECK(p.param_count_actual() == Projector::param_count(cfg, 4));
    }
    ProjectorConfig ldp{ProjectorKind::Ldp, 8, 12, 4};
    ProjectorConfig ldpv2{ProjectorKind::LdpV2, 8, 12, 4};
    for (auto cfg : {ldp, ldpv2}) {
        Projector p(cfg, 4, rng);
        CHECK(p.param_count_actual() == Projector::param_count(cfg, 4));
    }
}

TEST_CASE("output token count equals target_tokens for every kind and plan") {
    std::mt19937_64 seeds(5);
    for (int grid_side : {2, 4, 6}) {
        const int g = grid_side * grid_side;
        for (auto kind : {ProjectorKind::Linear, ProjectorKind::Mlp, ProjectorKind::Ldp, ProjectorKind::LdpV2,
                          ProjectorKind::Xdp}) {
            std::vector<int> targets;
            if (kind == ProjectorKind::Linear || kind == ProjectorKind::Mlp) {
                targets = {g};
            } else if (kind == ProjectorKind::Ldp) {
                targets = {g / 4};
            } else {
                for (auto c : valid_token_counts(grid_side)) targets.push_back(static_cast<int>(c));
            }
            for (int target : targets) {
                Projector p = make(kind, 5, 7, target, grid_side, seeds());
                Tensor out = p.project(features_for(grid_side, 5, seeds()));
                CHECK(out.shape() == Shape{target, 7});
            }
        }
    }
}

TEST_CASE("all kinds are differentiable end to end") {
    for (auto kind : {ProjectorKind::Linear, ProjectorKind::Mlp, ProjectorKind::Ldp, ProjectorKind::LdpV2,
                      ProjectorKind::Xdp}) {
        const int g = 16;
        const int target = (kind == ProjectorKind::Linear || kind == ProjectorKind::Mlp) ? g : 4;
        Projector p = make(kind, 4, 5, target, 4, 6);
        VisualFeatures f = features_for(4, 4, 7);

        std::vector<Tensor> inputs{f.tokens};
        p.visit_params([&](const std::string&, Tensor& t) {
            t.set_requires_grad(false);
            inputs.push_back(t);
        });
        auto rep = gradcheck([&]() { return p.project(f); }, inputs);
        CHECK_MESSAGE(rep.max_rel_err < 1e-3, (to_string(kind) + ": " + rep.worst_location));
    }
}

TEST_CASE("kind/target mismatches are rejected") {
    std::mt19937_64 rng(8);
    CHECK_THROWS_WITH_AS(Projector(ProjectorConfig{ProjectorKind::Linear, 4, 5, 4}, 4, rng),
                         doctest::Contains("preserves token count"), std::invalid_argument);
    CHECK_THROWS_AS(Projector(ProjectorConfig{ProjectorKind::Mlp, 4, 5, 4}, 4, rng), std::invalid_argument);
    CHECK_THROWS_WITH_AS(Projector(ProjectorConfig{ProjectorKind::Ldp, 4, 5, 8}, 4, rng), doctest::Contains("75%"),
                         std::invalid_argument);
    CHECK_THROWS_AS(Projector(ProjectorConfig{ProjectorKind::Xdp, 4, 5, 7}, 4, rng), std::invalid_argument);
    // projector refuses features from the wrong grid
    Projector p = make(ProjectorKind::Xdp, 4, 5, 4, 4);
    CHECK_THROWS_AS(p.project(features_for(6, 4, 9)), std::invalid_argument);
}
