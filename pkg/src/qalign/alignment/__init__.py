"""Margin ranking losses, toy encoder and training loop."""

from .encoder import ToyEncoderParams, encode, encode_batch, init_params
from .losses import (
    LossConfig,
    SimilarityGrid,
    evaluate_losses,
    loss_consistency,
    loss_negative,
    loss_positive,
    loss_quality_ranking_variant,
    total_loss,
)
from .prompts import PromptBank, cosine_similarity, prompt_similarities, random_bank
from .training import ImageLadders, OptimizerConfig, grad_check, train
