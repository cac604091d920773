import numpy as np
import pandas as pd
import pytest

from app.core.errors import ConfigurationError, RegistrationError, UnknownSourceError
from app.hypernet.census import embeddings_size, generator_size, hypernet_census, per_layer_hypernet_census
from app.hypernet.network import HyperNetwork
from app.hypernet.registry import SourceEmbeddingRegistry, SourceKind
from app.models.config import BackboneConfig, HypernetConfig
from app.models.domain import TaskLanguagePair
from app.numcore.gradcheck import check_gradients
from app.numcore.tensor import Tensor, backward
from app.providers.base import adapter_param_count
from app.providers.hyper import HyperAdapterProvider

TASKS = ("pos", "ner", "mlm")
LANGUAGES = ("en", "l1", "l2", "l3")


def build_hypernet(config: HypernetConfig, hidden: int, num_layers: int, seed: int = 0) -> HyperNetwork:
    hypernet = HyperNetwork(config, hidden, num_layers, np.random.default_rng(seed))
    for task in TASKS:
        hypernet.register_source(SourceKind.TASK, task)
    for language in LANGUAGES:
        hypernet.register_source(SourceKind.LANGUAGE, language)
    return hypernet


class TestRegistry:
    """Test suite for task, language and layer embeddings."""

    @pytest.fixture
    def registry(self):
        registry = SourceEmbeddingRegistry(3, 4, 2, num_layers=2, rng=np.random.default_rng(0))
        registry.register("task", "pos")
        registry.register(SourceKind.LANGUAGE, "en")
        registry.register(SourceKind.LANGUAGE, "l1")
        return registry

    def test_ids_follow_registration_order(self, registry):
        assert registry.id_of("language", "l1") == 1
        assert registry.names(SourceKind.LANGUAGE) == ["en", "l1"]
        assert registry.source_dim == 9

    def test_duplicate(self, registry):
        with pytest.raises(RegistrationError):
            registry.register(SourceKind.TASK, "pos")

    def test_unknown(self, registry):
        with pytest.raises(UnknownSourceError):
            registry.id_of(SourceKind.TASK, "ner")
        with pytest.raises(UnknownSourceError):
            registry.row(SourceKind.LANGUAGE, 5)
        with pytest.raises(UnknownSourceError):
            registry.layer(2)

    def test_tables_and_frame(self, registry, tmp_path):
        tables = registry.tables()
        assert tables["lang_emb"].shape == (2, 4)
        assert tables["layer_emb"].shape == (2, 2)
        frame = registry.to_frame(SourceKind.LANGUAGE)
        assert list(frame.index) == ["en", "l1"]
        path = registry.export_csv(SourceKind.LANGUAGE, tmp_path / "lang.csv")
        loaded = pd.read_csv(path, index_col=0)
        np.testing.assert_allclose(loaded.to_numpy(), tables["lang_emb"])


class TestGeneration:
    """Test suite for adapter generation from source embeddings."""

    @pytest.fixture
    def config(self):
        return HypernetConfig(task_dim=3, language_dim=3, layer_dim=2, projector_dim=4, projector_hidden=6, bottleneck=3)

    def test_flat_layout(self, config):
        hypernet = build_hypernet(config.model_copy(update={"generator_init_std": 0.1}), 8, 2)
        flat = hypernet.generator(hypernet.combine_sources(0, 1, 1).reshape(1, -1)).data.reshape(-1)
        adapter = hypernet.generate_adapter(0, 1, 1)
        h, b = 8, 3
        assert flat.shape == (adapter_param_count(h, b),)
        np.testing.assert_array_equal(adapter.D.data, flat[: h * b].reshape(h, b))
        np.testing.assert_array_equal(adapter.d_bias.data, flat[h * b : h * b + b])
        np.testing.assert_array_equal(adapter.U.data, flat[h * b + b : 2 * h * b + b].reshape(b, h))
        np.testing.assert_array_equal(adapter.u_bias.data, flat[2 * h * b + b :])

    def test_without_biases(self, config):
        hypernet = build_hypernet(config.model_copy(update={"adapter_bias": False}), 8, 2)
        adapter = hypernet.generate_adapter(0, 0, 0)
        assert adapter.d_bias is None and adapter.u_bias is None
        assert hypernet.generator.adapter_size == 2 * 8 * 3

    def test_stack_matches_per_layer(self, config):
        hypernet = build_hypernet(config.model_copy(update={"generator_init_std": 0.1}), 8, 2)
        for layer, adapter in enumerate(hypernet.generate_stack(1, 2)):
            single = hypernet.generate_adapter(1, 2, layer)
            np.testing.assert_allclose(adapter.D.data, single.D.data)
            np.testing.assert_allclose(adapter.U.data, single.U.data)

    def test_layers_differ(self, config):
        hypernet = build_hypernet(config.model_copy(update={"generator_init_std": 0.1}), 8, 2)
        first, second = hypernet.generate_stack(0, 0)
        assert not np.allclose(first.D.data, second.D.data)

    def test_identity_at_init(self, config, backbone):
        """Test that a zero generator leaves every hidden state bit-for-bit unchanged."""
        hypernet = build_hypernet(config, backbone.config.hidden, backbone.config.num_layers)
        provider = HyperAdapterProvider(hypernet)
        rng = np.random.default_rng(4)
        for _ in range(100):
            ids = rng.integers(3, backbone.config.vocab_size, size=(2, 6))
            mask = np.ones(ids.shape)
            mask[1, 4:] = 0.0
            pair = TaskLanguagePair(task=TASKS[int(rng.integers(3))], language=LANGUAGES[int(rng.integers(4))])
            plain = backbone.encode(ids, mask)[-1]
            adapted = backbone.encode(ids, mask, adapters=provider.adapters_for(pair))[-1]
            np.testing.assert_array_equal(plain.data, adapted.data)

    def test_gradient_reaches_only_rows_read(self, config, backbone):
        hypernet = build_hypernet(config.model_copy(update={"generator_init_std": 0.1}), 8, 2)
        provider = HyperAdapterProvider(hypernet)
        ids = np.array([[5, 6, 7]])
        states = backbone.encode(ids, np.ones(ids.shape), adapters=provider.adapters_for(TaskLanguagePair(task="pos", language="l1")))
        backward((states[-1] * states[-1]).sum())
        named = hypernet.named_parameters()
        assert named["hypernet.lang_emb.l1"].grad is not None
        assert named["hypernet.task_emb.pos"].grad is not None
        assert named["hypernet.lang_emb.l2"].grad is None
        assert named["hypernet.task_emb.ner"].grad is None
        assert all(named[f"hypernet.layer_emb.{i}"].grad is not None for i in range(2))

    def test_end_to_end_gradient(self, config, backbone):
        """Test finite differences from the encoder output back to the embeddings."""
        hypernet = build_hypernet(config.model_copy(update={"generator_init_std": 0.3}), 8, 2)
        provider = HyperAdapterProvider(hypernet)
        ids = np.array([[5, 9, 11, 4]])
        weights = Tensor(np.random.default_rng(5).normal(size=(1, 4, 8)))
        pair = TaskLanguagePair(task="ner", language="l2")

        def loss():
            return (backbone.encode(ids, np.ones(ids.shape), adapters=provider.adapters_for(pair))[-1] * weights).sum()

        named = hypernet.named_parameters()
        params = {k: named[k] for k in ("hypernet.lang_emb.l2", "hypernet.task_emb.ner", "hypernet.layer_emb.1", "hypernet.proj.w2")}
        errors = check_gradients(loss, params)
        assert max(errors.values()) < 1e-3, errors

    def test_swapping_task_rows_swaps_adapters(self, config):
        """Test that the generated adapter depends on the task only through its embedding row."""
        hypernet = build_hypernet(config.model_copy(update={"generator_init_std": 0.1}), 8, 2, seed=6)
        pos, ner = hypernet.task_id("pos"), hypernet.task_id("ner")
        language = hypernet.language_id("l1")
        before = {task: hypernet.generate_stack(task, language) for task in (pos, ner)}
        named = hypernet.named_parameters()
        first, second = named["hypernet.task_emb.pos"], named["hypernet.task_emb.ner"]
        first.data, second.data = second.data.copy(), first.data.copy()
        after = {task: hypernet.generate_stack(task, language) for task in (pos, ner)}
        for old, new in zip(before[pos], after[ner]):
            np.testing.assert_array_equal(old.D.data, new.D.data)
            np.testing.assert_array_equal(old.U.data, new.U.data)
        for old, new in zip(before[ner], after[pos]):
            np.testing.assert_array_equal(old.D.data, new.D.data)
        assert not np.allclose(before[pos][0].D.data, before[ner][0].D.data)

    def test_backbone_mismatch(self, config):
        hypernet = build_hypernet(config, 8, 2)
        with pytest.raises(ConfigurationError):
            hypernet.check_backbone(BackboneConfig(hidden=16, num_heads=4, num_layers=2))

    def test_unknown_pair(self, config):
        provider = HyperAdapterProvider(build_hypernet(config, 8, 2))
        with pytest.raises(UnknownSourceError):
            provider.adapters_for(TaskLanguagePair(task="pos", language="zz"))

    def test_save_and_load(self, config, tmp_path):
        hypernet = build_hypernet(config.model_copy(update={"generator_init_std": 0.1}), 8, 2, seed=3)
        hypernet.save(tmp_path / "hyper")
        loaded = HyperNetwork.load(tmp_path / "hyper")
        assert loaded.registry.names(SourceKind.TASK) == list(TASKS)
        for a, b in zip(hypernet.generate_stack(2, 3), loaded.generate_stack(2, 3)):
            np.testing.assert_array_equal(a.D.data, b.D.data)
            np.testing.assert_array_equal(a.u_bias.data, b.u_bias.data)

    def test_load_missing(self, tmp_path):
        with pytest.raises(ConfigurationError):
            HyperNetwork.load(tmp_path)


class TestCensus:
    """Test suite for parameter accounting."""

    def test_base_model_scale_closed_forms(self):
        assert adapter_param_count(768, 256) == 394_240
        assert generator_size(32, 768, 256) == 13_009_920

    def test_census_matches_closed_form(self):
        config = HypernetConfig(task_dim=3, language_dim=5, layer_dim=2, projector_dim=4, projector_hidden=6, bottleneck=3)
        hypernet = build_hypernet(config, 8, 2)
        census = hypernet_census(hypernet)
        assert census.trainable["generator"] == generator_size(4, 8, 3)
        assert census.trainable["embeddings"] == embeddings_size(len(TASKS), len(LANGUAGES), 2, config)
        assert census.trainable["projector"] == (10 * 6 + 6) + (6 * 4 + 4)

    def test_frozen_backbone_counted_separately(self, backbone):
        config = HypernetConfig(task_dim=3, language_dim=3, layer_dim=2, projector_dim=4, projector_hidden=6, bottleneck=3)
        hypernet = build_hypernet(config, 8, 2)
        census = hypernet_census(hypernet, layer_norm=backbone.layer_norm_parameters(), backbone=backbone.named_parameters())
        assert census.frozen["backbone"] + census.trainable["backbone"] == sum(
            t.size for t in backbone.named_parameters().values()
        )
        assert census.trainable["layer_norm"] == sum(t.size for t in backbone.layer_norm_parameters().values())

    def test_shared_beats_per_layer(self):
        config = HypernetConfig(task_dim=8, language_dim=8, layer_dim=4, projector_dim=8, projector_hidden=16, bottleneck=8)
        num_layers = 6
        shared = hypernet_census(build_hypernet(config, 16, num_layers)).total_trainable
        per_layer = per_layer_hypernet_census(config, 16, num_layers, len(TASKS), len(LANGUAGES)).total_trainable
        assert shared < per_layer
        assert per_layer_hypernet_census(config, 16, 1, 3, 4).trainable["generator"] == generator_size(8, 16, 8)
