"""Hypernetwork generating adapter weights from source embeddings."""
from app.hypernet.census import embeddings_size, generator_size, hypernet_census, per_layer_hypernet_census
from app.hypernet.network import AdapterGenerator, HyperNetwork, SourceProjector
from app.hypernet.registry import SourceEmbeddingRegistry, SourceKind

__all__ = [
    "AdapterGenerator",
    "HyperNetwork",
    "SourceEmbeddingRegistry",
    "SourceKind",
    "SourceProjector",
    "embeddings_size",
    "generator_size",
    "hypernet_census",
    "per_layer_hypernet_census",
]
