from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Dict, List, Optional

from app.core.errors import ShapeError
from app.models.domain import TaskLanguagePair
from app.numcore import ops
from app.numcore.tensor import Tensor


@dataclass(frozen=True)
class AdapterWeights:
    """One layer's bottleneck adapter: ``D`` (h x b) and ``U`` (b x h) plus biases."""

    D: Tensor
    U: Tensor
    d_bias: Optional[Tensor]
    u_bias: Optional[Tensor]
    layer: int

    @property
    def hidden(self) -> int:
        return self.D.shape[0]

    @property
    def bottleneck(self) -> int:
        return self.D.shape[1]

    def named(self) -> Dict[str, Tensor]:
        named = {"D": self.D, "U": self.U}
        if self.d_bias is not None:
            named["d_bias"] = self.d_bias
        if self.u_bias is not None:
            named["u_bias"] = self.u_bias
        return named


def adapter_param_count(hidden: int, bottleneck: int, bias: bool = True) -> int:
    """Flat size of one adapter: 2hb + b + h with biases."""
    return 2 * hidden * bottleneck + ((bottleneck + hidden) if bias else 0)


def adapter_forward(z: Tensor, w: AdapterWeights) -> Tensor:
    """``U . ReLU(D . z + d_bias) + u_bias + z``, residual added last.

    Raises:
        ShapeError: the trailing dim of ``z`` is not the adapter's hidden size
    """
    if z.shape[-1] != w.hidden:
        raise ShapeError(f"adapter for hidden size {w.hidden} applied to input of shape {z.shape}")
    down = z @ w.D
    if w.d_bias is not None:
        down = down + w.d_bias
    up = ops.relu(down) @ w.U
    if w.u_bias is not None:
        up = up + w.u_bias
    return up + z


class LayerAdapters(ABC):
    """Adapters bound to one (task, language) pair, indexed by layer."""

    @abstractmethod
    def apply(self, layer: int, z: Tensor) -> Tensor:
        """Transform the output of transformer layer ``layer``."""

    @abstractmethod
    def named(self) -> Dict[str, Tensor]:
        """Every adapter tensor keyed ``[{role}.]{layer}.{part}``."""


class AdapterStack(LayerAdapters):
    """One plain adapter per layer."""

    def __init__(self, weights: List[AdapterWeights]) -> None:
        self.weights = weights

    def apply(self, layer: int, z: Tensor) -> Tensor:
        return adapter_forward(z, self.weights[layer])

    def named(self) -> Dict[str, Tensor]:
        return {f"{w.layer}.{part}": t for w in self.weights for part, t in w.named().items()}


class AdapterProvider(ABC):
    """Base class for anything that hands out adapters per (task, language)."""

    @abstractmethod
    def adapters_for(self, pair: TaskLanguagePair) -> LayerAdapters:
        """Bind adapters for a pair.

        Raises:
            UnknownSourceError: the task or language is unknown to the provider
        """

    @abstractmethod
    def parameter_groups(self) -> Dict[str, Dict[str, Tensor]]:
        """Parameters grouped by component, for census and checkpoints."""

    def named_parameters(self) -> Dict[str, Tensor]:
        merged: Dict[str, Tensor] = {}
        for group in self.parameter_groups().values():
            merged.update(group)
        return merged
