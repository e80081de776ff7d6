"""Command-line interface: synth, train, evaluate, curves."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .config import load_experiment_config
from .errors import LeadtimeError
from .experiment import Predictor, run_curves, run_evaluate, run_train
from .nnet import load_checkpoint
from .synth import SynthSpec, synthesize_corpus, write_corpus


def _cmd_synth(args) -> int:
    spec = SynthSpec.from_json(args.spec)
    records = synthesize_corpus(spec, seed=args.seed)
    manifest = write_corpus(records, args.out)
    print(f"wrote {len(records)} dialogues; manifest at {manifest}")
    return 0


def _cmd_train(args) -> int:
    cfg = load_experiment_config(args.config)
    out = run_train(cfg)
    print(json.dumps(out, sort_keys=True))
    return 0


def _cmd_evaluate(args) -> int:
    cfg = load_experiment_config(args.config)
    chosen = [bool(args.checkpoint), args.silence_baseline, args.oracle]
    if sum(chosen) != 1:
        raise LeadtimeError(
            "choose exactly one of --checkpoint, --silence-baseline, --oracle")
    if args.checkpoint:
        predictor = Predictor("checkpoint", load_checkpoint(args.checkpoint))
    elif args.silence_baseline:
        predictor = Predictor("silence")
    else:
        predictor = Predictor("oracle")
    summary = run_evaluate(cfg, predictor, split=args.split,
                           out_prefix=args.out_prefix,
                           bootstrap=args.bootstrap)
    print(json.dumps(summary, sort_keys=True))
    return 0


def _cmd_curves(args) -> int:
    written = run_curves(args.report, args.out_prefix)
    for path in written:
        print(path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="leadtime",
        description="Predict the lead time to a dialogue partner's next "
                    "speech initiation.")
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--spec", required=True, help="SynthSpec JSON file")
    p.add_argument("--out", required=True, help="output corpus directory")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("train", help="train a model from an experiment config")
    p.add_argument("--config", required=True)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a predictor over a split")
    p.add_argument("--config", required=True)
    p.add_argument("--checkpoint", help="path to a trained checkpoint")
    p.add_argument("--silence-baseline", action="store_true",
                   help="evaluate the 700 ms silence baseline")
    p.add_argument("--oracle", action="store_true",
                   help="evaluate the ground-truth oracle predictor")
    p.add_argument("--split", default="test", choices=["train", "val", "test"])
    p.add_argument("--out-prefix", default=None)
    p.add_argument("--bootstrap", type=int, default=0,
                   help="add bootstrap 95%% bands from N resamples")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("curves", help="emit plot-ready curve tables")
    p.add_argument("--report", required=True, help="report CSV from evaluate")
    p.add_argument("--out-prefix", required=True)
    p.set_defaults(func=_cmd_curves)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except LeadtimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
