"""Compact transformer encoder, MLM pretraining, and checkpoints."""
from app.backbone.checkpoint import load_checkpoint, save_checkpoint
from app.backbone.mlm import MaskedBatch, mask_tokens, masked_loss, mlm_loss
from app.backbone.model import Backbone, is_layer_norm
from app.backbone.pretrain import corpus_hash, pretrain
from app.backbone.vocab import Vocabulary, pad_batch

__all__ = [
    "Backbone",
    "MaskedBatch",
    "Vocabulary",
    "corpus_hash",
    "is_layer_norm",
    "load_checkpoint",
    "mask_tokens",
    "masked_loss",
    "mlm_loss",
    "pad_batch",
    "pretrain",
    "save_checkpoint",
]
