"""Trait-model inference by message passing."""

from hybridqe.infer.engine import (
    Diagnostics,
    ModelConfig,
    RankPosterior,
    TraitModel,
    confidence_score,
    fit_model,
    flag_inconsistent_judgments,
    held_out_rank_distribution,
    observe_judgment,
    posterior_rank_distribution,
    run_inference,
)
from hybridqe.infer.gaussian import (
    Gaussian1D,
    gaussian_divide,
    gaussian_multiply,
    product_factor_messages,
    truncated_gaussian_moments,
)
from hybridqe.infer.serialize import format_model, load_model, parse_model, save_model

__all__ = [
    "Diagnostics", "Gaussian1D", "ModelConfig", "RankPosterior", "TraitModel",
    "confidence_score", "fit_model", "flag_inconsistent_judgments", "format_model",
    "held_out_rank_distribution",
    "gaussian_divide", "gaussian_multiply", "load_model", "observe_judgment", "parse_model",
    "posterior_rank_distribution", "product_factor_messages", "run_inference", "save_model",
    "truncated_gaussian_moments",
]
