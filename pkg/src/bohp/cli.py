"""Command-line entry point: ``bohp {train,gradcheck,summarize,dump-episode}``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import platform
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .core import Network
from .engine import BACKEND
from .fdcheck import FdConfig, gradcheck_suite
from .summary import STRONG, format_table, summarize
from .tasks import TASK_KINDS, TaskConfig, generate
from .trainer import TrainConfig, multi_run, task_defaults

log = logging.getLogger("bohp")


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    return int(os.environ.get("BOHP_SEED", "0"))


def _add_task_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--task", choices=TASK_KINDS, default="completion")
    p.add_argument("--n", type=int, default=8, help="pattern length (default: 8)")
    p.add_argument("--seed", type=int, default=None,
                   help="base seed (default: $BOHP_SEED, else 0)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bohp", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train networks on a task and write curves/models",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    _add_task_flags(p)
    p.add_argument("--episodes", type=int, default=10500, help="total episodes, frozen tail included")
    p.add_argument("--freeze-last", type=int, default=500, help="final episodes run with frozen parameters")
    p.add_argument("--lr", type=float, default=None, help="learning rate (default: per task)")
    p.add_argument("--optimizer", choices=("sgd", "adam"), default=None, help="default: per task")
    p.add_argument("--gamma", type=float, default=None, help="trace time constant (default: per task)")
    p.add_argument("--init-scale", type=float, default=None,
                   help="half-width of the uniform initialisation (default: per task)")
    p.add_argument("--loss", choices=("l1", "mse", "ce"), default=None,
                   help="training loss (default: l1 for completion, ce otherwise)")
    p.add_argument("--runs", type=int, default=20)
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p.add_argument("--clip-alpha-nonnegative", action="store_true",
                   help="clamp plasticity coefficients to >= 0 after every update")
    p.add_argument("--out", type=Path, required=True, help="output directory")

    p = sub.add_parser("gradcheck", help="compare analytical gradients with finite differences",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("--instances", type=int, default=100)
    p.add_argument("--epsilon", type=float, default=1e-4)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=None, help="suite seed (default: $BOHP_SEED, else 0)")
    p.add_argument("--out", type=Path, default=None, help="write the JSON report here")

    p = sub.add_parser("summarize", help="classify the connections of a trained model")
    p.add_argument("model", type=Path)
    p.add_argument("--label-inputs", type=int, default=None,
                   help="number of trailing label inputs (default: 2 for softmax models, else 0)")
    p.add_argument("--threshold", type=float, default=STRONG,
                   help="magnitude at which a weight or plasticity coefficient counts as strong")
    p.add_argument("--out", type=Path, default=None, help="write the JSON summary here")

    p = sub.add_parser("dump-episode", help="print one generated episode as JSON")
    _add_task_flags(p)
    p.add_argument("--out", type=Path, default=None)
    return parser


def train_config(args) -> TrainConfig:
    seed = _seed(args)
    task = TaskConfig(args.task, args.n, seed)
    preset = task_defaults(args.task)
    overrides = {k: v for k, v in (("learning_rate", args.lr), ("optimizer", args.optimizer),
                                   ("gamma", args.gamma),
                                   ("init_scale", args.init_scale)) if v is not None}
    return replace(preset, task=task, seed=seed, episodes_total=args.episodes,
                   freeze_last=args.freeze_last, loss=args.loss,
                   clip_alpha_nonnegative=args.clip_alpha_nonnegative, **overrides)


def write_curve(path: Path, stats) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["episode", "median", "q25", "q75"])
        for i, med, lo, hi in stats.csv_rows():
            writer.writerow([i, repr(float(med)), repr(float(lo)), repr(float(hi))])


def cmd_train(args) -> int:
    cfg = train_config(args)
    out: Path = args.out
    (out / "models").mkdir(parents=True, exist_ok=True)
    stats = multi_run(cfg, args.runs, jobs=args.jobs)
    write_curve(out / "curve.csv", stats)
    runs = []
    for r in stats.runs:
        path = out / "models" / f"run_{r.seed}.json"
        r.final.save(path)
        runs.append({"seed": r.seed, "model": str(path.relative_to(out)),
                     "frozen_error": r.frozen_error(), "frozen_metric": r.frozen_metric()})
    manifest = {
        "command": "train",
        "config": cfg.to_dict(),
        "runs_requested": args.runs,
        "seeds": [cfg.seed + i for i in range(args.runs)],
        "runs": runs,
        "diverged": {str(k): v for k, v in stats.diverged.items()},
        "summary": {
            "median_frozen_error": float(np.median(stats.frozen_errors())) if runs else None,
            "median_frozen_metric": float(np.median(stats.frozen_metrics())) if runs else None,
        },
        "versions": {"bohp": __version__, "numpy": np.__version__,
                     "python": platform.python_version(), "backend": BACKEND},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1), encoding="utf-8")
    print(f"wrote {out / 'curve.csv'} ({len(stats.median)} rows), {len(runs)} models")
    print(f"median frozen error {manifest['summary']['median_frozen_error']}, "
          f"median frozen metric {manifest['summary']['median_frozen_metric']}")
    if stats.diverged:
        print(f"diverged runs: {manifest['diverged']}", file=sys.stderr)
        return 1
    return 0


def cmd_gradcheck(args, grad_fn=None) -> int:
    cfg = FdConfig(args.epsilon, args.tolerance)
    kwargs = {} if grad_fn is None else {"grad_fn": grad_fn}
    try:
        report = gradcheck_suite(args.instances, cfg, seed=_seed(args), **kwargs)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    data = report.to_dict()
    if args.out is not None:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(json.dumps(data, indent=1), encoding="utf-8")
    s = data["summary"]
    print(f"{s['n_entries']} gradients from {args.instances} instances: "
          f"max rel error {s['max_rel_error']:.3e}, mean {s['mean_rel_error']:.3e}, "
          f"{'PASS' if s['passed'] else 'FAIL'} at tolerance {s['tolerance']:g}")
    if not report.passed:
        for e in report.failures[:20]:
            print(f"  instance {e['instance']} {e['param']}: analytical {e['analytical']:.6e} "
                  f"fd {e['finite_difference']:.6e} rel {e['relative_error']:.2e}", file=sys.stderr)
        return 1
    return 0


def cmd_summarize(args) -> int:
    try:
        net = Network.from_dict(json.loads(args.model.read_text(encoding="utf-8")))
    except json.JSONDecodeError as exc:
        print(f"error: {args.model}:{exc.lineno}:{exc.colno}: {exc.msg}", file=sys.stderr)
        return 2
    except (KeyError, TypeError, ValueError) as exc:
        print(f"error: {args.model}: malformed model: {exc}", file=sys.stderr)
        return 2
    report = summarize(net, args.label_inputs, args.threshold)
    print(format_table(report))
    if args.out is not None:
        args.out.write_text(json.dumps(report, indent=1), encoding="utf-8")
    return 0


def cmd_dump_episode(args) -> int:
    script = generate(TaskConfig(args.task, args.n, _seed(args)))
    text = json.dumps(script.to_dict(), indent=1)
    if args.out is not None:
        args.out.write_text(text, encoding="utf-8")
    else:
        print(text)
    return 0


COMMANDS = {"train": cmd_train, "gradcheck": cmd_gradcheck,
            "summarize": cmd_summarize, "dump-episode": cmd_dump_episode}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except OSError as exc:
        print(f"error: {exc.filename or ''}: {exc.strerror}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
