import argparse
import json

import structlog

from app.backbone.pretrain import pretrain
from app.backbone.vocab import Vocabulary
from app.cli.common import add_config_argument, load_context
from app.core.errors import UsageError
from app.models.config import component_seed
from app.synthdata.conll import write_corpora

logger = structlog.get_logger()

CONFIG_ECHO = "experiment.json"


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("pretrain", help="MLM-pretrain the backbone on the seen languages")
    add_config_argument(parser)
    parser.add_argument(
        "--write-corpus",
        action="store_true",
        help="also dump every language's train/dev/test splits as CoNLL files under {root}/corpus",
    )
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    context = load_context(args.config)
    config = context.config
    family = context.family()
    # The vocabulary spans every language; only the corpus is restricted.
    vocab = Vocabulary.build(family.surface_tokens(), config.backbone.vocab_size)
    corpus = [
        sentence
        for language in family.seen
        for sentence in family.corpus(language, config.data.pretrain_sentences, "pretrain")
    ]
    if args.write_corpus and context.layout.corpus.exists():
        raise UsageError(f"{context.layout.corpus} already exists; use another output root")
    out_dir = context.layout.create(context.layout.backbone)
    if args.write_corpus:
        sizes = {
            "train": config.data.train_sentences,
            "dev": config.data.dev_sentences,
            "test": config.data.test_sentences,
        }
        write_corpora(family, sizes, context.layout.create(context.layout.corpus), seed=config.seed)
    logger.info("pretraining", languages=family.seen, sentences=len(corpus), steps=config.pretrain.steps)
    backbone = pretrain(
        corpus,
        config.backbone,
        config.pretrain.steps,
        component_seed(config.seed, "backbone_init"),
        vocab,
        family.seen,
        schedule=config.pretrain,
        out_dir=out_dir,
    )
    (out_dir / CONFIG_ECHO).write_text(json.dumps(context.echo, indent=2), encoding="utf-8")
    print(f"final mlm loss: {backbone.training_losses[-1]:.4f}")
    print(out_dir)
    return 0
