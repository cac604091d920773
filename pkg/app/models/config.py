"""Experiment configuration sections.

Every section forbids unknown keys. Defaults are the desk-scale setting.
"""
from typing import Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator


class Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class BackboneConfig(Section):
    """Compact transformer encoder dimensions."""

    num_layers: int = Field(4, ge=1)
    hidden: int = Field(64, ge=1)
    num_heads: int = Field(4, ge=1)
    ff_dim: int = Field(256, ge=1)
    vocab_size: int = Field(2048, ge=8)
    max_seq_len: int = Field(64, ge=2)
    dropout: float = Field(0.1, ge=0.0, lt=1.0)

    @model_validator(mode="after")
    def heads_divide_hidden(self) -> "BackboneConfig":
        if self.hidden % self.num_heads:
            raise ValueError(f"hidden ({self.hidden}) must be divisible by num_heads ({self.num_heads})")
        return self


class LanguageEntry(Section):
    name: str
    group: int = Field(ge=0)
    seen_in_pretraining: bool = True
    word_order: Optional[List[str]] = None


def _default_languages() -> List[LanguageEntry]:
    layout = [
        ("en", 0, True),
        ("l1", 0, True),
        ("l2", 1, True),
        ("l3", 1, False),
        ("l4", 2, True),
        ("l5", 2, True),
        ("l6", 3, True),
        ("l7", 3, False),
    ]
    return [LanguageEntry(name=n, group=g, seen_in_pretraining=s) for n, g, s in layout]


def _default_lexicon() -> Dict[str, int]:
    return {
        "NOUN": 60,
        "VERB": 40,
        "ADJ": 30,
        "ADV": 15,
        "DET": 6,
        "ADP": 10,
        "PRON": 8,
        "PER": 25,
        "LOC": 25,
    }


class DataConfig(Section):
    """Synthetic language family and corpus sizes."""

    languages: List[LanguageEntry] = Field(default_factory=_default_languages)
    pivot: str = "en"
    # Languages with MLM data only: never supervised in any partition
    eval_only_languages: List[str] = Field(default_factory=list)
    lexicon_sizes: Dict[str, int] = Field(default_factory=_default_lexicon)
    group_core_fraction: float = Field(0.4, gt=0.0, le=1.0)
    language_share_rate: float = Field(0.5, ge=0.0, le=1.0)
    # minimum lexicon overlap inside a group, checked when the family is built
    relatedness_threshold: float = Field(0.3, gt=0.0, lt=1.0)
    entity_rate: float = Field(0.8, ge=0.0)
    pp_rate: float = Field(0.5, ge=0.0, le=1.0)
    adv_rate: float = Field(0.3, ge=0.0, le=1.0)
    train_sentences: int = Field(2000, gt=0)
    dev_sentences: int = Field(200, gt=0)
    test_sentences: int = Field(200, gt=0)
    mlm_sentences: int = Field(2000, gt=0)
    pretrain_sentences: int = Field(2000, gt=0)
    # {language}.{split}.conll files here replace the sampled corpus for that split
    conll_dir: Optional[str] = None

    @model_validator(mode="after")
    def names_are_consistent(self) -> "DataConfig":
        names = [lang.name for lang in self.languages]
        if len(set(names)) != len(names):
            raise ValueError("language names must be unique")
        if self.pivot not in names:
            raise ValueError(f"pivot {self.pivot!r} is not a configured language")
        unknown = sorted(set(self.eval_only_languages) - set(names))
        if unknown:
            raise ValueError(f"eval_only_languages not configured: {unknown}")
        if self.pivot in self.eval_only_languages:
            raise ValueError("the pivot language cannot be eval-only")
        return self


class HypernetConfig(Section):
    task_dim: int = Field(16, ge=1)
    language_dim: int = Field(16, ge=1)
    layer_dim: int = Field(16, ge=1)
    projector_dim: int = Field(8, ge=1)
    projector_hidden: int = Field(32, ge=1)
    bottleneck: int = Field(16, ge=1)
    adapter_bias: bool = True
    generator_init_std: float = Field(0.0, ge=0.0)
    embedding_init_std: float = Field(0.02, gt=0.0)


class RegimeSection(Section):
    """Optimisation schedule shared by every regime."""

    tasks: List[str] = Field(default_factory=lambda: ["pos", "ner"])
    steps: int = Field(20000, ge=1)
    batch_size: int = Field(32, ge=1)
    peak_lr: float = Field(1e-3, gt=0.0)
    full_finetune_lr: float = Field(1e-4, gt=0.0)
    warmup_steps: int = Field(400, ge=0)
    eval_every: int = Field(500, ge=1)
    temperature: float = Field(0.5, gt=0.0)
    mlm_weight: float = Field(1.0, ge=0.0)
    mask_rate: float = Field(0.15, gt=0.0, lt=1.0)


class PretrainConfig(Section):
    steps: int = Field(5000, ge=1)
    batch_size: int = Field(32, ge=1)
    peak_lr: float = Field(1e-3, gt=0.0)
    warmup_steps: int = Field(200, ge=0)
    mask_rate: float = Field(0.15, gt=0.0, lt=1.0)


class MadXConfig(Section):
    language_bottleneck: int = Field(32, ge=1)
    task_bottleneck: int = Field(6, ge=1)
    language_steps: int = Field(2000, ge=1)
    task_epochs: int = Field(20, ge=1)


class FewShotConfig(Section):
    k_values: List[int] = Field(default_factory=lambda: [5, 10, 20, 50])
    shot_values: List[int] = Field(default_factory=lambda: [2, 4, 8])
    epochs: int = Field(50, ge=1)
    lr: float = Field(1e-3, gt=0.0)
    batch_size: int = Field(32, ge=1)
    new_label_base_task: str = "ner"


class OutputConfig(Section):
    root: str = "outputs"


class ExperimentConfig(Section):
    """Fully resolved experiment configuration."""

    seed: int = 42
    backbone: BackboneConfig = Field(default_factory=BackboneConfig)
    data: DataConfig = Field(default_factory=DataConfig)
    hypernet: HypernetConfig = Field(default_factory=HypernetConfig)
    regime: RegimeSection = Field(default_factory=RegimeSection)
    pretrain: PretrainConfig = Field(default_factory=PretrainConfig)
    madx: MadXConfig = Field(default_factory=MadXConfig)
    fewshot: FewShotConfig = Field(default_factory=FewShotConfig)
    output: OutputConfig = Field(default_factory=OutputConfig)


# Fixed offsets added to the root seed, one per stochastic component
SEED_OFFSETS: Dict[str, int] = {
    "languages": 0,
    "corpus": 1000,
    "backbone_init": 2000,
    "pretrain_stream": 3000,
    "hypernet_init": 4000,
    "head_init": 5000,
    "sampling": 6000,
    "dropout": 7000,
    "partition": 8000,
    "fewshot": 9000,
    "madx_init": 10000,
}


def component_seed(seed: int, component: str) -> int:
    return seed + SEED_OFFSETS[component]
