#pragma once

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "tinyvlm/config.hpp"
#include "tinyvlm/tensor.hpp"
#include "tinyvlm/vision.hpp"

namespace tinyvlm {

struct MergePlan {
    std::int64_t pool_h = 1;
    std::int64_t pool_w = 1;
};

// Pooling window realizing target_tokens from a grid_side x grid_side grid:
// pool_h and pool_w divide grid_side and (grid_side/pool_h)*(grid_side/pool_w)
// equals target_tokens. Prefers square windows; ties go to the larger pool_h.
// Throws with the list of achievable counts when no window exists.
MergePlan merge_plan(std::int64_t grid_side, std::int64_t target_tokens);

// All token counts reachable by some pooling window on this grid, ascending.
std::vector<std::int64_t> valid_token_counts(std::int64_t grid_side);

// Cross-modal connector H_v = P(Z_v). Five selectable architectures:
//   linear  single affine map, token count preserved
//   mlp     two affine layers with GELU, token count preserved
//   ldp     pointwise MLP + two depthwise-conv blocks, stride-2 reduction (G/4)
//   ldpv2   pointwise MLP + average-pool reduction + depthwise refinement
//   xdp     window concat merge + two-layer MLP with Mish
class Projector {
public:
    Projector(ProjectorConfig cfg, int grid_side, std::mt19937_64& rng);

    const ProjectorConfig& config() const { return cfg_; }
    int grid_side() const { return grid_side_; }

    Tensor project(const VisualFeatures& features) const;  // [target_tokens x out_dim]

    void visit_params(const std::function<void(const std::string&, Tensor&)>& fn);

    // Closed-form trainable parameter count for a configuration.
    static std::int64_t param_count(const ProjectorConfig& cfg, int grid_side);
    std::int64_t param_count_actual() const;

private:
    ProjectorConfig cfg_;
    int grid_side_ = 0;
    MergePlan plan_;

    // affine stack shared by all kinds (meaning varies per kind)
    Tensor w1_, b1_, w2_, b2_;
    // depthwise/pointwise conv weights (ldp, ldpv2)
    Tensor dw1_, dwb1_, pw1_, pwb1_;
    Tensor dw2_, dwb2_, pw2_, pwb2_;
};

}  // namespace tinyvlm
