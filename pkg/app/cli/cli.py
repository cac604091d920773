import argparse

from app.cli import evaluate, export, fewshot, pretrain, report, sweep, train


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hyperx",
        description="Hypernetwork-generated adapters for zero-shot transfer on a synthetic language family",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    pretrain.register(subparsers)
    train.register(subparsers)
    evaluate.register(subparsers)
    fewshot.register(subparsers)
    report.register(subparsers)
    export.register(subparsers)
    sweep.register(subparsers)

    return parser
