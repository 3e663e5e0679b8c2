"""``decontext`` command line: synth, extract, answer, train, evaluate.

Exit codes: 0 success, 1 some samples failed, 2 fatal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from decontext.metrics import MetricsError
from decontext.oracle import OracleError
from decontext.pipeline import cmd_answer, cmd_evaluate, cmd_extract, cmd_train, load_config, synthesize
from decontext.pipeline.config import ConfigError
from decontext.pipeline.records import StageError
from decontext.ranker import RankerError

log = logging.getLogger("decontext")

# the library error families all derive from ValueError; listed for readability
FATAL = (ConfigError, StageError, RankerError, MetricsError, ValueError, OracleError, OSError, KeyError)


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON or TOML config file")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("-v", "--verbose", action="count", default=0)

    p = argparse.ArgumentParser(prog="decontext", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], help="generate a planted-truth synthetic dataset")
    s.add_argument("--size", type=int, default=20)
    s.add_argument("--noise", type=float, default=0.0, help="oracle flip probability")
    s.add_argument("--distractor-rate", type=float, default=0.0)
    s.add_argument("--dim", type=int, default=16)
    s.add_argument("--out", type=Path, required=True, help="output directory")

    s = sub.add_parser("extract", parents=[common], help="caption graphs -> queries")
    s.add_argument("dataset", type=Path)
    s.add_argument("--out", type=Path, required=True)

    s = sub.add_parser("answer", parents=[common], help="queries -> oracle answers")
    s.add_argument("queries", type=Path)
    s.add_argument("--out", type=Path, required=True)

    s = sub.add_parser("train", parents=[common], help="train the query ranker")
    s.add_argument("--dataset", type=Path, required=True)
    s.add_argument("--answers", type=Path, required=True)
    s.add_argument("--out", type=Path, required=True, help="model file")

    s = sub.add_parser("evaluate", parents=[common], help="verdicts, evidence reports and metrics")
    s.add_argument("--dataset", type=Path, required=True)
    s.add_argument("--answers", type=Path, required=True)
    s.add_argument("--model", type=Path)
    s.add_argument("--annotations", type=Path)
    s.add_argument("--no-ranker", action="store_true", help="uniform supportiveness (ablation)")
    s.add_argument("--out", type=Path, required=True, help="output directory")
    return p


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        if args.command == "synth":
            seed = args.seed if args.seed is not None else 0
            summary = synthesize(args.out, args.size, args.noise, seed, args.distractor_rate, args.dim)
            log.info("wrote %d samples, %d queries, flip fraction %.4f",
                     summary.n_samples, summary.n_queries, summary.flip_fraction)
            return 0

        overrides = {"seed": args.seed}
        if args.command == "evaluate" and args.no_ranker:
            overrides["use_ranker"] = False
        cfg = load_config(args.config, **overrides)
        if args.command == "extract":
            res = cmd_extract(args.dataset, args.out, cfg)
        elif args.command == "answer":
            res = cmd_answer(args.queries, args.out, cfg)
        elif args.command == "train":
            res = cmd_train(args.dataset, args.answers, args.out, cfg)
        else:
            res = cmd_evaluate(args.dataset, args.answers, args.model, args.out, cfg, args.annotations)
            print(json.dumps(res.outputs["metrics"], indent=2))
    except FATAL as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return 2
    for item in res.failed:
        log.error("failed: %s", item)
    return res.exit_code


if __name__ == "__main__":
    sys.exit(main())
