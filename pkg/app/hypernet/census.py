"""Closed-form and programmatic parameter counts for the hypernetwork."""
from typing import Mapping, Optional

import numpy as np

from app.hypernet.network import AdapterGenerator, HyperNetwork, SourceProjector
from app.models.config import HypernetConfig
from app.models.domain import ParameterCensus
from app.numcore.tensor import Tensor
from app.providers.base import adapter_param_count
from app.providers.census import count_parameters, merge_censuses


def generator_size(projector_dim: int, hidden: int, bottleneck: int, bias: bool = True) -> int:
    """``(d_p + 1) * d_a``."""
    return (projector_dim + 1) * adapter_param_count(hidden, bottleneck, bias)


def embeddings_size(num_tasks: int, num_languages: int, num_layers: int, config: HypernetConfig) -> int:
    return num_tasks * config.task_dim + num_languages * config.language_dim + num_layers * config.layer_dim


def hypernet_census(
    hypernet: HyperNetwork,
    layer_norm: Optional[Mapping[str, Tensor]] = None,
    heads: Optional[Mapping[str, Tensor]] = None,
    backbone: Optional[Mapping[str, Tensor]] = None,
) -> ParameterCensus:
    """Trainables of a Hyper-X system: embeddings, projector, generator, layer norms, heads.

    Frozen backbone weights, when given, land in the frozen column.
    """
    rest = {"layer_norm": dict(layer_norm or {}), "heads": dict(heads or {})}
    if backbone is not None:
        rest["backbone"] = dict(backbone)
    return merge_censuses(count_parameters(hypernet), count_parameters(rest))


def per_layer_hypernet_census(
    config: HypernetConfig,
    hidden: int,
    num_layers: int,
    num_tasks: int,
    num_languages: int,
    rng: Optional[np.random.Generator] = None,
) -> ParameterCensus:
    """Census of the alternative with one projector/generator per layer and no layer embeddings."""
    rng = rng or np.random.default_rng(0)
    source_dim = config.task_dim + config.language_dim
    projector = generator = 0
    for i in range(num_layers):
        proj = SourceProjector(source_dim, config.projector_hidden, config.projector_dim, rng, prefix=f"proj.{i}")
        gen = AdapterGenerator(config.projector_dim, hidden, config.bottleneck, rng, config.adapter_bias, prefix=f"gen.{i}")
        projector += sum(t.size for t in proj.named_parameters().values())
        generator += sum(t.size for t in gen.named_parameters().values())
    embeddings = num_tasks * config.task_dim + num_languages * config.language_dim
    return ParameterCensus(trainable={"embeddings": embeddings, "projector": projector, "generator": generator})
