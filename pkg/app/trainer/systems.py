"""The three trainable systems behind one interface.

``hyperx`` generates adapters from the hypernetwork, ``full_finetune``
updates every backbone weight, ``madx`` stacks static language and task
adapters.
"""
from __future__ import annotations

import json
from abc import ABC, abstractmethod
from pathlib import Path
from typing import ClassVar, Dict, List, Optional, Sequence, Tuple, Type, Union

import numpy as np
import structlog

from app.backbone.mlm import mlm_loss
from app.backbone.model import Backbone, is_layer_norm
from app.backbone.vocab import Vocabulary, pad_batch
from app.core.errors import ConfigurationError, UnknownSourceError
from app.hypernet.census import hypernet_census
from app.hypernet.network import HyperNetwork
from app.hypernet.registry import SourceKind
from app.models.config import ExperimentConfig, component_seed
from app.models.domain import MLM_TASK, ParameterCensus, SystemName, TaskLanguagePair
from app.numcore import ops
from app.numcore.serialize import load_named, save_named
from app.numcore.tensor import Tensor, no_grad
from app.providers.base import AdapterProvider, LayerAdapters
from app.providers.census import count_parameters
from app.providers.hyper import HyperAdapterProvider
from app.providers.static import StaticAdapterProvider
from app.trainer.data import IGNORE, PairDataset, labels_for
from app.trainer.heads import TaskHead
from app.trainer.sampling import Batch

logger = structlog.get_logger()

SYSTEM_FILE = "system.json"

Groups = Dict[str, Dict[str, Tensor]]


class TaggingSystem(ABC):
    """Frozen (or not) backbone, optional adapters, and one head per task."""

    name: ClassVar[SystemName]

    def __init__(self, backbone: Backbone, vocab: Vocabulary, head_rng: np.random.Generator) -> None:
        self.backbone = backbone
        self.vocab = vocab
        self.heads: Dict[str, TaskHead] = {}
        self._head_rng = head_rng

    # -- structure -------------------------------------------------------

    def add_head(self, task: str, labels: Optional[Sequence[str]] = None) -> TaskHead:
        head = TaskHead(task, self.backbone.config.hidden, labels or labels_for(task), self._head_rng)
        self.heads[task] = head
        return head

    def remove_head(self, task: str) -> None:
        self.heads.pop(task, None)

    def head_parameters(self) -> Dict[str, Tensor]:
        named: Dict[str, Tensor] = {}
        for head in self.heads.values():
            named.update(head.named_parameters())
        return named

    def supports(self, pair: TaskLanguagePair) -> bool:
        return True

    @property
    def provider(self) -> Optional[AdapterProvider]:
        return None

    def adapters_for(self, pair: TaskLanguagePair) -> Optional[LayerAdapters]:
        return self.provider.adapters_for(pair) if self.provider is not None else None

    @abstractmethod
    def trainable_parameters(self) -> Dict[str, Tensor]:
        """Parameters the optimizer updates in the current training stage."""

    @abstractmethod
    def parameter_groups(self) -> Groups:
        """Every parameter of the system, grouped by component."""

    def census(self) -> ParameterCensus:
        return count_parameters(self.parameter_groups())

    # -- forward ---------------------------------------------------------

    def _logits(
        self,
        ids: np.ndarray,
        attention: np.ndarray,
        adapters: Optional[LayerAdapters],
        head: TaskHead,
        training: bool,
        rng: Optional[np.random.Generator],
    ) -> Tensor:
        final = self.backbone.encode(ids, attention, adapters=adapters, training=training, rng=rng)[-1]
        return head(final.reshape(-1, self.backbone.config.hidden))

    def _head(self, task: str) -> TaskHead:
        try:
            return self.heads[task]
        except KeyError:
            raise UnknownSourceError(f"no output head for task {task!r}") from None

    def loss(
        self,
        batch: Batch,
        rng: np.random.Generator,
        mlm_weight: float = 1.0,
        mask_rate: float = 0.15,
        training: bool = True,
        head_task: Optional[str] = None,
    ) -> Tensor:
        adapters = self.adapters_for(batch.pair)
        if batch.pair.is_mlm:
            loss = mlm_loss(self.backbone, batch.ids, batch.attention, mask_rate, rng, adapters, training)
            return ops.scale(loss, mlm_weight)
        head = self._head(head_task or batch.pair.task)
        logits = self._logits(batch.ids, batch.attention, adapters, head, training, rng)
        return ops.cross_entropy(logits, batch.labels.reshape(-1), ignore_index=IGNORE)

    def predict(self, dataset: PairDataset, head_task: Optional[str] = None, batch_size: int = 64) -> List[Tuple[str, ...]]:
        """Argmax tags for every sentence, in dataset order."""
        head = self._head(head_task or dataset.label_task or dataset.pair.task)
        predictions: List[Tuple[str, ...]] = []
        with no_grad():
            adapters = self.adapters_for(dataset.pair)
            for start in range(0, len(dataset), batch_size):
                chunk = dataset.ids[start : start + batch_size]
                ids, attention = pad_batch(chunk, self.backbone.config.max_seq_len)
                logits = self._logits(ids, attention, adapters, head, training=False, rng=None)
                best = logits.data.argmax(axis=-1).reshape(ids.shape)
                predictions.extend(head.decode(best[row, : len(seq)]) for row, seq in enumerate(chunk))
        return predictions

    # -- state -----------------------------------------------------------

    def snapshot(self) -> Dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self.trainable_parameters().items()}

    def restore(self, snapshot: Dict[str, np.ndarray]) -> None:
        params = self.trainable_parameters()
        for name, values in snapshot.items():
            params[name].data = values.copy()

    def describe(self) -> Dict:
        return {"system": self.name.value, "heads": {task: list(h.labels) for task, h in self.heads.items()}}

    def state_arrays(self) -> Dict[str, np.ndarray]:
        return {name: t.data for name, t in self.head_parameters().items()}

    def save(self, directory: Union[str, Path]) -> Path:
        directory = Path(directory)
        save_named(directory, self.state_arrays())
        (directory / SYSTEM_FILE).write_text(json.dumps(self.describe(), indent=2), encoding="utf-8")
        return directory

    def load_state_arrays(self, arrays: Dict[str, np.ndarray]) -> None:
        for name, tensor in self.head_parameters().items():
            tensor.data = np.array(arrays[name], dtype=np.float64)


class HyperXSystem(TaggingSystem):
    name = SystemName.HYPERX

    def __init__(self, backbone: Backbone, vocab: Vocabulary, hypernet: HyperNetwork, head_rng: np.random.Generator) -> None:
        hypernet.check_backbone(backbone.config)
        if not backbone.frozen:
            backbone.freeze(train_layer_norm=True)
        super().__init__(backbone, vocab, head_rng)
        self.hypernet = hypernet
        self._provider = HyperAdapterProvider(hypernet)

    @property
    def provider(self) -> HyperAdapterProvider:
        return self._provider

    def trainable_parameters(self) -> Dict[str, Tensor]:
        return {
            **self.hypernet.named_parameters(),
            **self.backbone.layer_norm_parameters(),
            **self.head_parameters(),
        }

    def parameter_groups(self) -> Groups:
        backbone = {n: t for n, t in self.backbone.named_parameters().items() if not is_layer_norm(n)}
        return {
            **self.hypernet.parameter_groups(),
            "layer_norm": self.backbone.layer_norm_parameters(),
            "heads": self.head_parameters(),
            "backbone": backbone,
        }

    def census(self) -> ParameterCensus:
        groups = self.parameter_groups()
        return hypernet_census(self.hypernet, groups["layer_norm"], groups["heads"], groups["backbone"])

    def state_arrays(self) -> Dict[str, np.ndarray]:
        arrays = super().state_arrays()
        arrays.update({n: t.data for n, t in self.backbone.layer_norm_parameters().items()})
        return arrays

    def save(self, directory: Union[str, Path]) -> Path:
        self.hypernet.save(directory)
        return super().save(directory)

    def load_state_arrays(self, arrays: Dict[str, np.ndarray]) -> None:
        super().load_state_arrays(arrays)
        for name, tensor in self.backbone.layer_norm_parameters().items():
            tensor.data = np.array(arrays[name], dtype=np.float64)


class FullFinetuneSystem(TaggingSystem):
    """Every backbone weight trains; no adapters, no MLM objective."""

    name = SystemName.FULL_FINETUNE

    def __init__(self, backbone: Backbone, vocab: Vocabulary, head_rng: np.random.Generator) -> None:
        backbone.unfreeze()
        super().__init__(backbone, vocab, head_rng)

    def supports(self, pair: TaskLanguagePair) -> bool:
        return not pair.is_mlm

    def trainable_parameters(self) -> Dict[str, Tensor]:
        return {**self.backbone.named_parameters(), **self.head_parameters()}

    def parameter_groups(self) -> Groups:
        return {"backbone": self.backbone.named_parameters(), "heads": self.head_parameters()}

    def state_arrays(self) -> Dict[str, np.ndarray]:
        arrays = super().state_arrays()
        arrays.update({n: t.data for n, t in self.backbone.named_parameters().items()})
        return arrays

    def load_state_arrays(self, arrays: Dict[str, np.ndarray]) -> None:
        super().load_state_arrays(arrays)
        self.backbone.load_arrays(arrays)


class MadXSystem(TaggingSystem):
    """Static adapters trained in two stages.

    Stage ``language`` trains one language adapter with MLM; stage ``task``
    trains task adapters and heads with every language adapter frozen.
    """

    name = SystemName.MADX

    def __init__(self, backbone: Backbone, vocab: Vocabulary, adapters: StaticAdapterProvider, head_rng: np.random.Generator) -> None:
        backbone.freeze(train_layer_norm=False)
        super().__init__(backbone, vocab, head_rng)
        self.adapters = adapters
        self.stage: Optional[str] = None
        self.active_language: Optional[str] = None

    @property
    def provider(self) -> StaticAdapterProvider:
        return self.adapters

    def set_stage(self, stage: Optional[str], language: Optional[str] = None) -> None:
        """``language`` (with a language name), ``task``, or None when training is over."""
        self.stage, self.active_language = stage, language
        for name, tensor in self.adapters.language_parameters().items():
            tensor.requires_grad = stage is None or (stage == "language" and f".{language}." in name)
        for tensor in self.adapters.task_parameters().values():
            tensor.requires_grad = stage in (None, "task")
        for tensor in self.head_parameters().values():
            tensor.requires_grad = stage in (None, "task")

    def trainable_parameters(self) -> Dict[str, Tensor]:
        if self.stage == "language":
            return self.adapters.language_parameters(self.active_language)
        if self.stage == "task":
            return {**self.adapters.task_parameters(), **self.head_parameters()}
        return {**self.adapters.named_parameters(), **self.head_parameters()}

    def parameter_groups(self) -> Groups:
        return {
            **self.adapters.parameter_groups(),
            "heads": self.head_parameters(),
            "backbone": self.backbone.named_parameters(),
        }

    def describe(self) -> Dict:
        info = super().describe()
        info.update(
            languages=list(self.adapters.language_adapters),
            tasks=list(self.adapters.task_adapters),
            task_language=self.adapters.task_language,
            language_bottleneck=self.adapters.language_bottleneck,
            task_bottleneck=self.adapters.task_bottleneck,
        )
        return info

    def state_arrays(self) -> Dict[str, np.ndarray]:
        arrays = super().state_arrays()
        arrays.update({n: t.data for n, t in self.adapters.named_parameters().items()})
        return arrays

    def load_state_arrays(self, arrays: Dict[str, np.ndarray]) -> None:
        super().load_state_arrays(arrays)
        for name, tensor in self.adapters.named_parameters().items():
            tensor.data = np.array(arrays[name], dtype=np.float64)


SYSTEMS: Dict[SystemName, Type[TaggingSystem]] = {
    SystemName.HYPERX: HyperXSystem,
    SystemName.FULL_FINETUNE: FullFinetuneSystem,
    SystemName.MADX: MadXSystem,
}


def build_system(
    system: SystemName,
    backbone: Backbone,
    vocab: Vocabulary,
    config: ExperimentConfig,
    tasks: Sequence[str],
    languages: Sequence[str],
    pivot: str,
) -> TaggingSystem:
    """Fresh system with a head per task and every source registered.

    Args:
        system: which adaptation method to build
        backbone: the pretrained encoder; full fine-tuning unfreezes it
        vocab: vocabulary the backbone was pretrained with
        config: experiment config, for seeds and the hypernet and MAD-X sizes
        tasks: downstream tasks, one head each
        languages: every language a pair may name
        pivot: language the MAD-X task adapters are trained on

    Returns:
        An untrained ``TaggingSystem``.
    """
    seed = config.seed
    head_rng = np.random.default_rng(component_seed(seed, "head_init"))
    if system is SystemName.HYPERX:
        hypernet = HyperNetwork.for_backbone(config.hypernet, backbone.config, np.random.default_rng(component_seed(seed, "hypernet_init")))
        for task in [*tasks, MLM_TASK]:
            hypernet.register_source(SourceKind.TASK, task)
        for language in languages:
            hypernet.register_source(SourceKind.LANGUAGE, language)
        built: TaggingSystem = HyperXSystem(backbone, vocab, hypernet, head_rng)
    elif system is SystemName.FULL_FINETUNE:
        built = FullFinetuneSystem(backbone, vocab, head_rng)
    elif system is SystemName.MADX:
        provider = StaticAdapterProvider(
            backbone.config.hidden,
            backbone.config.num_layers,
            config.madx.language_bottleneck,
            config.madx.task_bottleneck,
            pivot,
            np.random.default_rng(component_seed(seed, "madx_init")),
        )
        for language in languages:
            provider.add_language(language)
        for task in tasks:
            provider.add_task(task)
        built = MadXSystem(backbone, vocab, provider, head_rng)
    else:
        raise ConfigurationError(f"unknown system {system!r}")
    for task in tasks:
        built.add_head(task)
    logger.info("system built", system=system.value, tasks=list(tasks), languages=len(languages))
    return built


def load_system(directory: Union[str, Path], backbone: Backbone, vocab: Vocabulary) -> TaggingSystem:
    """Rebuild a trained system from a checkpoint directory over ``backbone``.

    Raises:
        ConfigurationError: the directory holds no system checkpoint
    """
    directory = Path(directory)
    if not (directory / SYSTEM_FILE).exists():
        raise ConfigurationError(f"no system checkpoint at {directory}")
    info = json.loads((directory / SYSTEM_FILE).read_text(encoding="utf-8"))
    name = SystemName(info["system"])
    rng = np.random.default_rng(0)
    if name is SystemName.HYPERX:
        system: TaggingSystem = HyperXSystem(backbone, vocab, HyperNetwork.load(directory), rng)
    elif name is SystemName.FULL_FINETUNE:
        system = FullFinetuneSystem(backbone, vocab, rng)
    else:
        provider = StaticAdapterProvider(
            backbone.config.hidden,
            backbone.config.num_layers,
            info["language_bottleneck"],
            info["task_bottleneck"],
            info["task_language"],
            rng,
        )
        for language in info["languages"]:
            provider.add_language(language)
        for task in info["tasks"]:
            provider.add_task(task)
        system = MadXSystem(backbone, vocab, provider, rng)
    for task, labels in info["heads"].items():
        system.add_head(task, labels)
    system.load_state_arrays(load_named(directory))
    return system
