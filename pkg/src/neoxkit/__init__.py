"""Desk-scale reimplementation of a 20B-parameter parallel-residual language model
stack: tokenizer, model, trainer, evaluation and infrastructure arithmetic."""

from .model import ModelConfig, init_params, param_count
from .tokenizer import TokenizerModel, load_model, train_bpe
from .trainer import TrainConfig, lr_at, train

__all__ = [
    "ModelConfig",
    "TokenizerModel",
    "TrainConfig",
    "init_params",
    "load_model",
    "lr_at",
    "param_count",
    "train",
    "train_bpe",
]
