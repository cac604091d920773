"""Post-LN transformer encoder with an MLM head."""
from __future__ import annotations

import hashlib
import math
import re
from typing import TYPE_CHECKING, Dict, List, Optional

import numpy as np

from app.core.errors import TruncationError, VocabularyError
from app.models.config import BackboneConfig
from app.numcore import ops
from app.numcore.init import normal, ones, zeros
from app.numcore.serialize import tensor_to_bytes
from app.numcore.tensor import Tensor

if TYPE_CHECKING:
    from app.providers.base import LayerAdapters

_LAYER_NORM = re.compile(r"(^|\.)ln\d*\.")
_MASK_VALUE = -1e9


def is_layer_norm(name: str) -> bool:
    return bool(_LAYER_NORM.search(name))


class Backbone:
    """The frozen encoder every adaptation method plugs into.

    Parameter names are stable dot-delimited paths such as ``layer.2.ffn.w1``.
    """

    def __init__(self, config: BackboneConfig, rng: np.random.Generator) -> None:
        self.config = config
        h, f = config.hidden, config.ff_dim
        p: Dict[str, Tensor] = {
            "embed.tok": normal(rng, (config.vocab_size, h)),
            "embed.pos": normal(rng, (config.max_seq_len, h)),
            "embed.ln.gamma": ones((h,)),
            "embed.ln.beta": zeros((h,)),
        }
        for i in range(config.num_layers):
            for proj in ("q", "k", "v", "o"):
                p[f"layer.{i}.attn.w{proj}"] = normal(rng, (h, h))
                p[f"layer.{i}.attn.b{proj}"] = zeros((h,))
            p[f"layer.{i}.ln1.gamma"] = ones((h,))
            p[f"layer.{i}.ln1.beta"] = zeros((h,))
            p[f"layer.{i}.ffn.w1"] = normal(rng, (h, f))
            p[f"layer.{i}.ffn.b1"] = zeros((f,))
            p[f"layer.{i}.ffn.w2"] = normal(rng, (f, h))
            p[f"layer.{i}.ffn.b2"] = zeros((h,))
            p[f"layer.{i}.ln2.gamma"] = ones((h,))
            p[f"layer.{i}.ln2.beta"] = zeros((h,))
        p["mlm.dense.w"] = normal(rng, (h, h))
        p["mlm.dense.b"] = zeros((h,))
        p["mlm.ln.gamma"] = ones((h,))
        p["mlm.ln.beta"] = zeros((h,))
        p["mlm.bias"] = zeros((config.vocab_size,))
        for name, tensor in p.items():
            tensor.name = name
        self.params = p
        self.frozen = False
        self.training_losses: List[float] = []

    def named_parameters(self) -> Dict[str, Tensor]:
        return dict(self.params)

    def trainable_parameters(self) -> Dict[str, Tensor]:
        return {n: t for n, t in self.params.items() if t.requires_grad}

    def layer_norm_parameters(self) -> Dict[str, Tensor]:
        return {n: t for n, t in self.params.items() if is_layer_norm(n)}

    def freeze(self, train_layer_norm: bool = True) -> None:
        """Freeze every weight; layer-norm parameters stay trainable if asked."""
        for name, tensor in self.params.items():
            tensor.requires_grad = train_layer_norm and is_layer_norm(name)
            tensor.zero_grad()
        self.frozen = True

    def unfreeze(self) -> None:
        for tensor in self.params.values():
            tensor.requires_grad = True
        self.frozen = False

    def load_arrays(self, arrays: Dict[str, np.ndarray]) -> None:
        for name, tensor in self.params.items():
            tensor.data = np.array(arrays[name], dtype=np.float64)

    def frozen_fingerprint(self) -> str:
        """Hash of every non-layer-norm weight."""
        digest = hashlib.sha256()
        for name in sorted(self.params):
            if not is_layer_norm(name):
                digest.update(name.encode("utf-8"))
                digest.update(tensor_to_bytes(self.params[name]))
        return digest.hexdigest()

    def _check_inputs(self, token_ids: np.ndarray) -> None:
        if token_ids.ndim != 2:
            raise VocabularyError(f"token ids must be a (batch, seq) array, got shape {token_ids.shape}")
        if token_ids.shape[1] > self.config.max_seq_len:
            raise TruncationError(
                f"sequence length {token_ids.shape[1]} exceeds max_seq_len {self.config.max_seq_len}"
            )
        if token_ids.size and (token_ids.min() < 0 or token_ids.max() >= self.config.vocab_size):
            raise VocabularyError(
                f"token id {int(token_ids.max())} outside vocabulary of size {self.config.vocab_size}"
            )

    def _attention(self, x: Tensor, mask_bias: Tensor, i: int, training: bool, rng) -> Tensor:
        p, cfg = self.params, self.config
        batch, seq, h = x.shape
        heads = cfg.num_heads
        dim = h // heads

        def project(name: str) -> Tensor:
            out = x @ p[f"layer.{i}.attn.w{name}"] + p[f"layer.{i}.attn.b{name}"]
            return out.reshape(batch, seq, heads, dim).transpose(0, 2, 1, 3)

        q, k, v = project("q"), project("k"), project("v")
        scores = ops.scale(q @ k.transpose(0, 1, 3, 2), 1.0 / math.sqrt(dim)) + mask_bias
        probs = ops.dropout(ops.softmax(scores), cfg.dropout, rng, training)
        context = (probs @ v).transpose(0, 2, 1, 3).reshape(batch, seq, h)
        return context @ p[f"layer.{i}.attn.wo"] + p[f"layer.{i}.attn.bo"]

    def encode(
        self,
        token_ids: np.ndarray,
        mask: np.ndarray,
        adapters: Optional["LayerAdapters"] = None,
        training: bool = False,
        rng: Optional[np.random.Generator] = None,
    ) -> List[Tensor]:
        """Hidden states ``(batch, seq, hidden)`` after each of the L layers.

        When ``adapters`` is given, each layer's output passes through that
        layer's adapter before the next layer.
        """
        token_ids = np.asarray(token_ids, dtype=np.int64)
        self._check_inputs(token_ids)
        p, cfg = self.params, self.config
        seq = token_ids.shape[1]
        mask_bias = Tensor((1.0 - np.asarray(mask, dtype=np.float64))[:, None, None, :] * _MASK_VALUE)

        x = ops.embedding(p["embed.tok"], token_ids) + ops.embedding(p["embed.pos"], np.arange(seq))
        x = ops.dropout(ops.layer_norm(x, p["embed.ln.gamma"], p["embed.ln.beta"]), cfg.dropout, rng, training)

        states: List[Tensor] = []
        for i in range(cfg.num_layers):
            attended = ops.dropout(self._attention(x, mask_bias, i, training, rng), cfg.dropout, rng, training)
            x = ops.layer_norm(x + attended, p[f"layer.{i}.ln1.gamma"], p[f"layer.{i}.ln1.beta"])
            hidden = ops.gelu(x @ p[f"layer.{i}.ffn.w1"] + p[f"layer.{i}.ffn.b1"])
            ffn = ops.dropout(hidden @ p[f"layer.{i}.ffn.w2"] + p[f"layer.{i}.ffn.b2"], cfg.dropout, rng, training)
            x = ops.layer_norm(x + ffn, p[f"layer.{i}.ln2.gamma"], p[f"layer.{i}.ln2.beta"])
            if adapters is not None:
                x = adapters.apply(i, x)
            states.append(x)
        return states

    def mlm_logits(self, rows: Tensor) -> Tensor:
        """Vocabulary logits for hidden rows ``(n, hidden)``; output tied to token embeddings."""
        p = self.params
        hidden = ops.gelu(rows @ p["mlm.dense.w"] + p["mlm.dense.b"])
        hidden = ops.layer_norm(hidden, p["mlm.ln.gamma"], p["mlm.ln.beta"])
        return hidden @ ops.transpose(p["embed.tok"], (1, 0)) + p["mlm.bias"]
