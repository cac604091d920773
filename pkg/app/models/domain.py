from enum import Enum
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, computed_field, model_validator

MLM_TASK = "mlm"


class Regime(str, Enum):
    """Training regimes."""
    SINGLE_TASK = "single_task"
    MULTI_TASK = "multi_task"
    MIXED_LANGUAGE = "mixed_language"


class SystemName(str, Enum):
    """Systems that can be trained and compared."""
    HYPERX = "hyperx"
    FULL_FINETUNE = "full_finetune"
    MADX = "madx"


class Partition(str, Enum):
    A = "A"
    B = "B"


class FewShotMode(str, Enum):
    EXISTING_TASK = "existing_task"
    NEW_LABEL_SET = "new_label_set"


class TaskLanguagePair(BaseModel):
    """One cell of the task x language grid."""
    model_config = ConfigDict(frozen=True)

    task: str
    language: str

    @property
    def is_mlm(self) -> bool:
        return self.task == MLM_TASK

    def __str__(self) -> str:
        return f"{self.task}/{self.language}"

    @classmethod
    def parse(cls, text: str) -> "TaskLanguagePair":
        task, _, language = text.partition("/")
        return cls(task=task, language=language)


class RegimeConfig(BaseModel):
    """Resolved plan for one training run."""
    model_config = ConfigDict(extra="forbid")

    regime: Regime
    partition: Optional[Partition] = None
    train_pairs: List[TaskLanguagePair]
    eval_pairs: List[TaskLanguagePair] = Field(default_factory=list)
    steps: int = Field(ge=1)
    batch_size: int = Field(ge=1)
    peak_lr: float = Field(gt=0.0)
    warmup_steps: int = Field(ge=0)
    eval_every: int = Field(ge=1)
    seed: int
    temperature: float = Field(0.5, gt=0.0)
    mlm_weight: float = Field(1.0, ge=0.0)
    mask_rate: float = Field(0.15, gt=0.0, lt=1.0)

    @model_validator(mode="after")
    def partition_matches_regime(self) -> "RegimeConfig":
        if self.partition is not None and self.regime != Regime.MIXED_LANGUAGE:
            raise ValueError("a partition is only meaningful in the mixed_language regime")
        if self.regime == Regime.MIXED_LANGUAGE and self.partition is None:
            raise ValueError("the mixed_language regime needs a partition")
        return self

    @property
    def downstream_train_pairs(self) -> List[TaskLanguagePair]:
        return [p for p in self.train_pairs if not p.is_mlm]


class ParameterCensus(BaseModel):
    """Exact parameter counts, trainable vs frozen, by component."""

    trainable: Dict[str, int] = Field(default_factory=dict)
    frozen: Dict[str, int] = Field(default_factory=dict)

    @computed_field
    @property
    def total_trainable(self) -> int:
        return sum(self.trainable.values())

    @computed_field
    @property
    def total_frozen(self) -> int:
        return sum(self.frozen.values())

    @property
    def total(self) -> int:
        return self.total_trainable + self.total_frozen


class MetricRecord(BaseModel):
    """One evaluation event."""

    step: int
    pair: str
    metric: str
    value: float


class RunManifest(BaseModel):
    """Write-once record of one run."""

    name: str
    system: SystemName
    regime: RegimeConfig
    config: Dict[str, Any]
    seed: int
    git_describe: str = "unknown"
    invocation: Dict[str, Any] = Field(default_factory=dict)
    census: ParameterCensus = Field(default_factory=ParameterCensus)
    metric_history: List[MetricRecord] = Field(default_factory=list)
    best_step: Optional[int] = None
    best_score: Optional[float] = None
    best_checkpoint: Optional[str] = None
    backbone_path: Optional[str] = None
    extra: Dict[str, Any] = Field(default_factory=dict)


class PairScore(BaseModel):
    task: str
    language: str
    metric: str
    value: float
    zero_shot: bool = True
    seen: bool = True
    vacuous: bool = False


class EvalReport(BaseModel):
    """Per-pair scores for one system; aggregates are always recomputed."""

    system: str
    regime: str
    pivot: str
    scores: List[PairScore] = Field(default_factory=list)
    baseline: Optional[str] = None

    def score(self, task: str, language: str) -> Optional[PairScore]:
        for entry in self.scores:
            if entry.task == task and entry.language == language:
                return entry
        return None
