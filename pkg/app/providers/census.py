from typing import Dict, Mapping, Union

from app.models.domain import ParameterCensus
from app.numcore.tensor import Tensor

Groups = Mapping[str, Mapping[str, Tensor]]


def count_parameters(source: Union[Groups, object]) -> ParameterCensus:
    """Exact trainable/frozen counts per component.

    ``source`` is either a provider exposing ``parameter_groups()`` or the
    groups mapping itself.
    """
    groups: Groups = source.parameter_groups() if hasattr(source, "parameter_groups") else source
    trainable: Dict[str, int] = {}
    frozen: Dict[str, int] = {}
    for component, named in groups.items():
        for tensor in named.values():
            bucket = trainable if tensor.requires_grad else frozen
            bucket[component] = bucket.get(component, 0) + tensor.size
    return ParameterCensus(trainable=trainable, frozen=frozen)


def merge_censuses(*censuses: ParameterCensus) -> ParameterCensus:
    """Sum per-component counts; components may appear in any subset of ``censuses``."""
    trainable: Dict[str, int] = {}
    frozen: Dict[str, int] = {}
    for census in censuses:
        for key, value in census.trainable.items():
            trainable[key] = trainable.get(key, 0) + value
        for key, value in census.frozen.items():
            frozen[key] = frozen.get(key, 0) + value
    return ParameterCensus(trainable=trainable, frozen=frozen)
