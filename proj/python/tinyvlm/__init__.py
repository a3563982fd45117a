"""tinyvlm: a desk-scale vision-language pipeline.

A from-scratch stack: ViT-style encoder over image patches, a family of
downsampling projectors (linear / mlp / ldp / ldpv2 / xdp), a LLaMA-style
causal decoder, assistant-only loss masking, and the two-stage
freeze-then-finetune training recipe.
"""

from ._core import (
    ModelConfig,
    VlmModel,
    Vocabulary,
    corpus_vocabulary,
    evaluate,
    gelu,
    gen_corpus,
    merge_plan,
    mish,
    projector_param_count,
    silu,
    softmax,
    train_two_stage,
    valid_token_counts,
    verify_corpus,
)

__all__ = [
    "ModelConfig",
    "VlmModel",
    "Vocabulary",
    "corpus_vocabulary",
    "evaluate",
    "gelu",
    "gen_corpus",
    "merge_plan",
    "mish",
    "projector_param_count",
    "silu",
    "softmax",
    "train_two_stage",
    "valid_token_counts",
    "verify_corpus",
]
