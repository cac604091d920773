"""Shared tiny-scale fixtures: every test here runs in seconds on a laptop."""
import json

import numpy as np
import pytest
import structlog

from app.backbone.model import Backbone
from app.backbone.vocab import Vocabulary
from app.models.config import (
    BackboneConfig,
    DataConfig,
    ExperimentConfig,
    FewShotConfig,
    HypernetConfig,
    LanguageEntry,
    MadXConfig,
    OutputConfig,
    PretrainConfig,
    RegimeSection,
)
from app.synthdata.family import LanguageFamily
from app.trainer.data import DataBank

@pytest.fixture(autouse=True)
def _reset_structlog():
    """CLI runs bind structlog to the per-test captured stderr; unbind it afterwards."""
    yield
    structlog.reset_defaults()


TINY_LEXICON = {"NOUN": 8, "VERB": 6, "ADJ": 4, "ADV": 3, "DET": 2, "ADP": 3, "PRON": 2, "PER": 4, "LOC": 4}


def tiny_experiment(root: str) -> ExperimentConfig:
    return ExperimentConfig(
        seed=11,
        backbone=BackboneConfig(num_layers=2, hidden=8, num_heads=2, ff_dim=16, vocab_size=256, max_seq_len=24),
        data=DataConfig(
            languages=[
                LanguageEntry(name="en", group=0),
                LanguageEntry(name="l1", group=0),
                LanguageEntry(name="l2", group=1),
                LanguageEntry(name="l3", group=1, seen_in_pretraining=False),
            ],
            lexicon_sizes=dict(TINY_LEXICON),
            train_sentences=24,
            dev_sentences=8,
            test_sentences=8,
            mlm_sentences=24,
            pretrain_sentences=24,
        ),
        hypernet=HypernetConfig(task_dim=3, language_dim=3, layer_dim=2, projector_dim=4, projector_hidden=6, bottleneck=3),
        regime=RegimeSection(steps=6, batch_size=4, warmup_steps=1, eval_every=3),
        pretrain=PretrainConfig(steps=3, batch_size=4, warmup_steps=1),
        madx=MadXConfig(language_bottleneck=3, task_bottleneck=2, language_steps=2, task_epochs=1),
        fewshot=FewShotConfig(k_values=[2], shot_values=[1], epochs=1, batch_size=4),
        output=OutputConfig(root=root),
    )


@pytest.fixture
def tiny_config(tmp_path):
    """Four languages, two tasks, a two-layer backbone of width 8."""
    return tiny_experiment(str(tmp_path / "outputs"))


@pytest.fixture
def config_file(tmp_path, tiny_config):
    """The tiny config written as a JSON config source."""
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps(tiny_config.model_dump(mode="json")), encoding="utf-8")
    return path


@pytest.fixture
def family(tiny_config):
    return LanguageFamily.from_config(tiny_config.data, tiny_config.seed)


@pytest.fixture
def vocab(family, tiny_config):
    return Vocabulary.build(family.surface_tokens(), tiny_config.backbone.vocab_size)


@pytest.fixture
def backbone(tiny_config):
    """A randomly initialised backbone, frozen with trainable layer norms."""
    model = Backbone(tiny_config.backbone, np.random.default_rng(3))
    model.freeze()
    return model


@pytest.fixture
def bank(family, vocab, tiny_config):
    return DataBank(family, vocab, tiny_config.data, tiny_config.backbone.max_seq_len)
