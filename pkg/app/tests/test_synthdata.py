from dataclasses import replace

import pytest
from structlog.testing import capture_logs

from app.core.errors import LabelError, ParseError, SamplingError, SpecError, UnknownSourceError
from app.synthdata.conll import ColumnMap, read_conll, repair_bio, write_conll, write_corpora
from app.synthdata.corpus import rederive, sample_corpus
from app.synthdata.family import LanguageFamily
from app.synthdata.language import (
    CANONICAL_ORDER,
    ENTITY_TYPES,
    LanguageSpec,
    entity_type_of,
    generate_language,
    lexicon_overlap,
)
from app.tests.conftest import TINY_LEXICON


def spec(name="xx", seed=1, group=0, **overrides):
    base = LanguageSpec(name=name, seed=seed, group=group, group_seed=1000 + group, lexicon_sizes=dict(TINY_LEXICON))
    return replace(base, **overrides)


class TestLanguages:
    """Test suite for language generation."""

    def test_generation_is_deterministic(self):
        a, b = generate_language(spec()), generate_language(spec())
        assert a.lexicon == b.lexicon
        assert a.word_order == b.word_order

    def test_group_members_share_more_than_strangers(self):
        kin_a = generate_language(spec("a", seed=1, group=0))
        kin_b = generate_language(spec("b", seed=2, group=0))
        stranger = generate_language(spec("c", seed=3, group=1))
        assert lexicon_overlap(kin_a, kin_b) > lexicon_overlap(kin_a, stranger)

    def test_pinned_word_order(self):
        language = generate_language(spec(word_order=CANONICAL_ORDER))
        assert language.word_order == CANONICAL_ORDER

    def test_invalid_word_order(self):
        with pytest.raises(SpecError, match="permutation"):
            generate_language(spec(word_order=("SUBJ", "VERB")))

    def test_empty_lexicon_category(self):
        with pytest.raises(SpecError, match="ADV"):
            generate_language(spec(lexicon_sizes={**TINY_LEXICON, "ADV": 0}))


class TestCorpus:
    """Test suite for annotated sentences and split sampling."""

    @pytest.fixture
    def language(self):
        return generate_language(spec())

    def test_tags_align_with_tokens(self, language):
        for sentence in sample_corpus(language, 20, "train"):
            assert len(sentence.tokens) == len(sentence.cat_tags) == len(sentence.bio_tags)
            for cat, bio in zip(sentence.cat_tags, sentence.bio_tags):
                assert (cat == "PROPN") == (bio != "O")

    def test_bio_is_well_formed(self, language):
        for sentence in sample_corpus(language, 30, "train"):
            repaired, repairs = repair_bio(sentence.bio_tags)
            assert repairs == 0
            assert repaired == sentence.bio_tags

    def test_splits_are_disjoint(self, language):
        train = {s.underlying for s in sample_corpus(language, 40, "train")}
        test = {s.underlying for s in sample_corpus(language, 20, "test")}
        assert not train & test

    def test_rederive_matches(self, language):
        for sentence in sample_corpus(language, 10, "dev"):
            assert rederive(language, sentence) == sentence

    def test_unknown_split(self, language):
        with pytest.raises(SamplingError):
            sample_corpus(language, 1, "holdout")

    def test_entity_rate(self, language):
        """Test that sentences carry 0.8 entity mentions on average."""
        sentences = sample_corpus(language, 10_000, "train")
        mentions = sum(entity_type_of(lexeme) in ENTITY_TYPES for s in sentences for lexeme in s.underlying)
        assert mentions / len(sentences) == pytest.approx(language.spec.entity_rate, rel=0.1)


class TestFamily:
    """Test suite for the configured language grid."""

    def test_seen_and_unseen(self, family):
        assert family.names == ["en", "l1", "l2", "l3"]
        assert family.seen == ["en", "l1", "l2"]
        assert family.unseen == ["l3"]
        assert family.groups() == {"en": 0, "l1": 0, "l2": 1, "l3": 1}

    def test_pivot_uses_canonical_order(self, family):
        assert family.languages["en"].word_order == CANONICAL_ORDER

    def test_spec_hash_is_stable(self, tiny_config):
        a = LanguageFamily.from_config(tiny_config.data, tiny_config.seed)
        b = LanguageFamily.from_config(tiny_config.data, tiny_config.seed)
        c = LanguageFamily.from_config(tiny_config.data, tiny_config.seed + 1)
        assert a.spec_hash() == b.spec_hash()
        assert a.spec_hash() != c.spec_hash()

    def test_groups_are_related(self, family):
        overlaps = family.check_relatedness(0.3)
        groups = family.groups()
        for (a, b), overlap in overlaps.items():
            if groups[a] == groups[b]:
                assert overlap >= 0.3, (a, b)
            else:
                assert overlap < 0.3, (a, b)

    def test_unrelated_group_members_rejected(self, tiny_config):
        data = tiny_config.data.model_copy(update={"group_core_fraction": 0.01, "language_share_rate": 0.0})
        with pytest.raises(SpecError, match="share group"):
            LanguageFamily.from_config(data, tiny_config.seed)

    def test_unknown_language_corpus(self, family):
        with pytest.raises(UnknownSourceError):
            family.corpus("zz", 2, "train")


class TestConll:
    """Test suite for CoNLL reading and writing."""

    def test_write_then_read(self, family, tmp_path):
        sentences = family.corpus("l1", 5, "test")
        path = write_conll(sentences, tmp_path / "l1.conll", spec_hash=family.spec_hash(), seed=11)
        assert path.with_suffix(".conll.manifest.json").exists()
        loaded = read_conll(path, language="l1")
        assert [s.tokens for s in loaded] == [s.tokens for s in sentences]
        assert [s.bio_tags for s in loaded] == [s.bio_tags for s in sentences]

    def test_illegal_inside_tag_is_repaired(self, tmp_path):
        path = tmp_path / "broken.conll"
        path.write_text("Ada\tPROPN\tI-PER\nruns\tVERB\tO\n\n", encoding="utf-8")
        with capture_logs() as logs:
            sentences = read_conll(path)
        assert sentences[0].bio_tags == ("B-PER", "O")
        assert any(entry["event"] == "bio repaired" for entry in logs)

    def test_repair_across_types(self):
        assert repair_bio(["B-PER", "I-LOC", "I-LOC"]) == (("B-PER", "B-LOC", "I-LOC"), 1)

    def test_unknown_tag(self, tmp_path):
        path = tmp_path / "bad.conll"
        path.write_text("x\tNOUN\tB-ORG\n\n", encoding="utf-8")
        with pytest.raises(LabelError, match="B-ORG"):
            read_conll(path)

    def test_ragged_rows(self, tmp_path):
        path = tmp_path / "ragged.conll"
        path.write_text("x\tNOUN\tO\ny\tNOUN\n\n", encoding="utf-8")
        with pytest.raises(ParseError, match="columns"):
            read_conll(path)

    def test_token_only_columns(self, tmp_path):
        path = tmp_path / "raw.conll"
        path.write_text("x\ny\n\nz\n", encoding="utf-8")
        sentences = read_conll(path, columns=ColumnMap(token=0, cat=None, bio=None))
        assert [s.tokens for s in sentences] == [("x", "y"), ("z",)]
        assert sentences[0].bio_tags is None

    def test_windows_line_endings(self, tmp_path):
        path = tmp_path / "crlf.conll"
        path.write_bytes(b"Ada\tPROPN\tB-PER\r\nruns\tVERB\tO\r\n\r\nx\tNOUN\tO\r\n")
        sentences = read_conll(path)
        assert [s.tokens for s in sentences] == [("Ada", "runs"), ("x",)]
        assert sentences[0].bio_tags == ("B-PER", "O")

    def test_missing_layer_stays_missing(self, family, tmp_path):
        sentences = [replace(s, cat_tags=None) for s in family.corpus("en", 3, "dev")]
        path = write_conll(sentences, tmp_path / "bio-only.conll")
        assert "\t_\t" in path.read_text(encoding="utf-8")
        loaded = read_conll(path, language="en")
        assert all(s.cat_tags is None for s in loaded)
        assert [s.bio_tags for s in loaded] == [s.bio_tags for s in sentences]

    def test_write_corpora(self, family, tmp_path):
        written = write_corpora(family, {"train": 3, "test": 2}, tmp_path / "corpus", seed=11)
        assert sorted(p.name for p in written) == sorted(
            f"{language}.{split}.conll" for language in family.names for split in ("train", "test")
        )
        assert len(read_conll(tmp_path / "corpus" / "l2.test.conll", language="l2")) == 2
