import math

import numpy as np
import pytest
from structlog.testing import capture_logs

from app.backbone.checkpoint import load_checkpoint, save_checkpoint
from app.backbone.mlm import IGNORE, mask_tokens, mlm_loss
from app.backbone.model import Backbone, is_layer_norm
from app.backbone.pretrain import pretrain
from app.backbone.vocab import FIRST_REGULAR_ID, MASK_ID, PAD_ID, UNK_ID, Vocabulary, pad_batch
from app.core.errors import (
    ConfigurationError,
    ContaminationError,
    DegenerateBatchError,
    TruncationError,
    VocabularyError,
)
from app.models.config import PretrainConfig
from app.numcore.serialize import SUFFIX
from app.numcore.tensor import backward
from app.synthdata.corpus import AnnotatedSentence


class TestVocabulary:
    """Test suite for the shared word-level vocabulary."""

    def test_specials_come_first(self):
        vocab = Vocabulary.build(["b", "a", "a"], 16)
        assert vocab.tokens[:3] == ["[PAD]", "[UNK]", "[MASK]"]
        assert vocab.encode(["a", "b", "zz"]).tolist() == [FIRST_REGULAR_ID, FIRST_REGULAR_ID + 1, UNK_ID]
        assert vocab.oov_count(["a", "zz", "yy"]) == 2

    def test_too_small(self):
        with pytest.raises(ConfigurationError):
            Vocabulary.build([f"w{i}" for i in range(20)], 8)

    def test_save_and_load(self, tmp_path):
        vocab = Vocabulary.build(["x", "y"], 10)
        vocab.save(tmp_path / "vocab.txt")
        loaded = Vocabulary.load(tmp_path / "vocab.txt")
        assert loaded.size == 10
        assert loaded.tokens == vocab.tokens

    def test_pad_batch(self):
        ids, mask = pad_batch([np.array([5, 6, 7]), np.array([8])], 4)
        assert ids.tolist() == [[5, 6, 7], [8, PAD_ID, PAD_ID]]
        assert mask.tolist() == [[1, 1, 1], [1, 0, 0]]

    def test_pad_batch_too_long(self):
        with pytest.raises(TruncationError):
            pad_batch([np.arange(5)], 4)


class TestMasking:
    """Test suite for 80/10/10 masking."""

    def test_only_real_tokens_are_selected(self):
        rng = np.random.default_rng(0)
        ids = np.array([[5, 6, 7, PAD_ID], [8, 9, PAD_ID, PAD_ID]])
        attention = (ids != PAD_ID).astype(float)
        for _ in range(20):
            batch = mask_tokens(ids, attention, 0.5, rng, 32)
            assert batch.num_masked >= 1
            assert np.all(batch.targets[attention == 0] == IGNORE)
            selected = batch.targets != IGNORE
            assert np.all(batch.targets[selected] == ids[selected])

    def test_at_least_one_position(self):
        batch = mask_tokens(np.array([[5]]), np.ones((1, 1)), 0.01, np.random.default_rng(1), 32)
        assert batch.num_masked == 1

    def test_replacement_mix(self):
        rng = np.random.default_rng(2)
        ids = np.full((200, 50), 10)
        batch = mask_tokens(ids, np.ones(ids.shape), 0.5, rng, 64)
        selected = batch.targets != IGNORE
        masked = (batch.inputs[selected] == MASK_ID).mean()
        kept = (batch.inputs[selected] == 10).mean()
        assert masked == pytest.approx(0.8, abs=0.02)
        # unchanged 10% plus random draws that hit the original id
        assert kept == pytest.approx(0.1, abs=0.02)

    def test_nothing_maskable(self):
        with pytest.raises(DegenerateBatchError):
            mask_tokens(np.array([[PAD_ID, PAD_ID]]), np.zeros((1, 2)), 0.15, np.random.default_rng(0), 32)


class TestBackbone:
    """Test suite for the encoder and its freeze contract."""

    @pytest.fixture
    def batch(self):
        ids = np.array([[5, 6, 7, 8], [9, 10, PAD_ID, PAD_ID]])
        return ids, (ids != PAD_ID).astype(float)

    def test_encode_shapes(self, backbone, batch):
        states = backbone.encode(*batch)
        assert len(states) == backbone.config.num_layers
        assert all(s.shape == (2, 4, backbone.config.hidden) for s in states)

    def test_input_validation(self, backbone):
        with pytest.raises(VocabularyError):
            backbone.encode(np.array([[backbone.config.vocab_size]]), np.ones((1, 1)))
        too_long = backbone.config.max_seq_len + 1
        with pytest.raises(TruncationError):
            backbone.encode(np.full((1, too_long), 5), np.ones((1, too_long)))

    def test_freeze_keeps_layer_norms_trainable(self, backbone):
        trainable = backbone.trainable_parameters()
        assert trainable
        assert all(is_layer_norm(name) for name in trainable)
        assert set(trainable) == set(backbone.layer_norm_parameters())

    def test_fingerprint_ignores_layer_norms(self, backbone):
        before = backbone.frozen_fingerprint()
        backbone.params["layer.0.ln1.gamma"].data = backbone.params["layer.0.ln1.gamma"].data + 1.0
        assert backbone.frozen_fingerprint() == before
        backbone.params["layer.0.ffn.w1"].data = backbone.params["layer.0.ffn.w1"].data + 1.0
        assert backbone.frozen_fingerprint() != before

    def test_mlm_gradients_reach_only_trainables(self, backbone, batch):
        loss = mlm_loss(backbone, *batch, 0.3, np.random.default_rng(0))
        backward(loss)
        for name, tensor in backbone.named_parameters().items():
            if is_layer_norm(name):
                continue
            assert tensor.grad is None, name

    def test_unfreeze(self, backbone):
        backbone.unfreeze()
        assert set(backbone.trainable_parameters()) == set(backbone.named_parameters())
        assert not backbone.frozen

    def test_untrained_loss_is_near_uniform(self, backbone, batch):
        loss = mlm_loss(backbone, *batch, 0.5, np.random.default_rng(0)).item()
        assert loss == pytest.approx(math.log(backbone.config.vocab_size), abs=0.3)


class TestPretrainAndCheckpoint:
    """Test suite for pretraining and checkpoint directories."""

    def test_held_out_language_rejected(self, family, vocab, tiny_config):
        corpus = family.corpus("l3", 4, "pretrain")
        with pytest.raises(ContaminationError, match="l3"):
            pretrain(corpus, tiny_config.backbone, 1, 0, vocab, family.seen)

    def test_pretrain_writes_checkpoint(self, family, vocab, tiny_config, tmp_path):
        corpus = [s for lang in family.seen for s in family.corpus(lang, 6, "pretrain")]
        out = tmp_path / "backbone"
        model = pretrain(corpus, tiny_config.backbone, 3, 5, vocab, family.seen, tiny_config.pretrain, out)
        assert model.frozen
        assert len(model.training_losses) == 3
        assert all(np.isfinite(model.training_losses))
        tensor_files = list(out.glob(f"*{SUFFIX}"))
        assert len(tensor_files) == len(model.named_parameters())
        assert (out / "loss_curve.jsonl").read_text().count("\n") == 3

    def test_roundtrip_restores_weights(self, backbone, vocab, tmp_path):
        save_checkpoint(backbone, vocab, tmp_path / "ckpt", seed=1, steps=0, corpus_hash="x")
        restored, restored_vocab = load_checkpoint(tmp_path / "ckpt")
        assert restored.frozen_fingerprint() == backbone.frozen_fingerprint()
        assert restored_vocab.tokens == vocab.tokens

    def test_missing_checkpoint(self, tmp_path):
        with pytest.raises(ConfigurationError, match="no backbone checkpoint"):
            load_checkpoint(tmp_path / "nowhere")

    def test_fresh_backbone_is_deterministic(self, tiny_config):
        a = Backbone(tiny_config.backbone, np.random.default_rng(9))
        b = Backbone(tiny_config.backbone, np.random.default_rng(9))
        assert a.frozen_fingerprint() == b.frozen_fingerprint()


class TestPretrainDynamics:
    """Test suite for what pretraining does over many steps."""

    @pytest.fixture
    def schedule(self):
        return PretrainConfig(steps=60, batch_size=8, peak_lr=1e-2, warmup_steps=5, mask_rate=0.3)

    @pytest.fixture
    def corpus(self, family):
        return [s for lang in family.seen for s in family.corpus(lang, 24, "pretrain")]

    def test_loss_falls(self, corpus, vocab, family, tiny_config, schedule):
        model = pretrain(corpus, tiny_config.backbone, 60, 2, vocab, family.seen, schedule)
        losses = model.training_losses
        assert np.mean(losses[-10:]) < np.mean(losses[:10])

    def test_same_seed_gives_identical_checkpoint_bytes(self, corpus, vocab, family, tiny_config, schedule, tmp_path):
        for name in ("a", "b"):
            pretrain(corpus, tiny_config.backbone, 20, 4, vocab, family.seen, schedule, tmp_path / name)
        files = sorted(p.name for p in (tmp_path / "a").iterdir())
        assert files == sorted(p.name for p in (tmp_path / "b").iterdir())
        for name in files:
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name

    def test_long_sentences_are_cut_and_logged(self, corpus, vocab, family, tiny_config, schedule):
        limit = tiny_config.backbone.max_seq_len
        long = AnnotatedSentence(tokens=tuple(corpus[0].tokens * limit)[: limit + 6], cat_tags=None, bio_tags=None, language="en")
        with capture_logs() as logs:
            model = pretrain([long, *corpus], tiny_config.backbone, 2, 0, vocab, family.seen, schedule)
        warnings = [e for e in logs if e["event"] == "pretrain sentences truncated"]
        assert len(warnings) == 1
        assert warnings[0]["count"] == 1
        assert warnings[0]["max_len"] == limit
        assert all(np.isfinite(model.training_losses))
