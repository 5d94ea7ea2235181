"""Command line front-end: ``run``, ``certify-graph``, ``gen-data``, ``version``."""
from __future__ import annotations

import argparse
import json
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig
from .data import partition, synth_two_class, write_csv, write_metadata
from .errors import ByrdieError, DegreeViolation, EnumerationBudgetExceeded
from .experiment import run_experiment
from .topology import certify_assumption3, read_edge_list

BUNDLED = ("fig1_desk", "fig2_T_sweep", "fig3_b_sweep", "iris_mlp")

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_RUN_FAILED = 3


def resolve_config(name_or_path: str) -> Path:
    """A filesystem path, or the name of a bundled config (with or without ``.cfg``)."""
    path = Path(name_or_path)
    if path.exists():
        return path
    stem = path.name[:-4] if path.name.endswith(".cfg") else path.name
    if stem in BUNDLED:
        ref = resources.files("byrdie") / "experiments" / f"{stem}.cfg"
        return Path(str(ref))
    raise FileNotFoundError(f"no config at {name_or_path!r} and no bundled config named {stem!r}")


def _error(kind: str, message: str, **extra) -> None:
    report = {"error": kind, "message": message, **extra}
    print(json.dumps(report, indent=2, default=str), file=sys.stderr)


def cmd_run(args) -> int:
    try:
        cfg = ExperimentConfig.load(resolve_config(args.config))
        if args.seed is not None:
            cfg = cfg.replace("experiment.seed", args.seed)
        if args.trials is not None:
            cfg = cfg.replace("experiment.trials", args.trials)
        cfg.check()
    except (ByrdieError, FileNotFoundError) as exc:
        _error(type(exc).__name__, str(exc))
        return EXIT_INVALID
    out = Path(args.out or f"runs/{cfg['experiment']['name']}")
    try:
        summary = run_experiment(cfg, out, jobs=args.jobs)
    except DegreeViolation as exc:
        r = exc.report
        _error("DegreeViolation", str(exc), b=r.b, required=r.required,
               nodes={str(n): d for n, d in sorted(r.violations.items())})
        return EXIT_INVALID
    except ByrdieError as exc:
        _error(type(exc).__name__, str(exc))
        return EXIT_INVALID
    if summary.errors:
        _error("RunFailed", "one or more trials failed; partial outputs kept", failures=summary.errors,
               out=str(out))
        return EXIT_RUN_FAILED
    print(f"wrote {len(summary.files)} files to {out} in {summary.wall_seconds:.1f}s")
    return EXIT_OK


def cmd_certify_graph(args) -> int:
    try:
        g = read_edge_list(args.edge_list)
        cert = certify_assumption3(g, args.b, args.mode, trials=args.samples,
                                   rng=np.random.default_rng(args.seed))
    except EnumerationBudgetExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (ByrdieError, FileNotFoundError) as exc:
        _error(type(exc).__name__, str(exc))
        return EXIT_INVALID
    print(cert)
    return EXIT_OK if cert.status != "refuted" else 1


def cmd_gen_data(args) -> int:
    try:
        ds = synth_two_class(args.P, args.margin, args.noise, args.count, np.random.default_rng(args.seed))
    except ByrdieError as exc:
        _error(type(exc).__name__, str(exc))
        return EXIT_INVALID
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    n_test = int(round(args.test_fraction * len(ds)))
    if n_test:
        split = partition(ds, [1], len(ds) - n_test, False, np.random.default_rng(args.seed))
        train, test = split.shards[1].data, split.test
        write_csv(test, out / "test.csv")
        write_metadata(test, out / "test.meta")
    else:
        train = ds
    write_csv(train, out / "train.csv")
    write_metadata(train, out / "train.meta", seed=args.seed, margin=args.margin, noise=args.noise)
    print(f"wrote {len(train)} training rows" + (f" and {n_test} test rows" if n_test else "") + f" to {out}")
    return EXIT_OK


def cmd_version(args) -> int:
    print(f"byrdie {__version__}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="byrdie", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment config")
    run.add_argument("--config", required=True, help="config path or bundled name, e.g. fig1_desk")
    run.add_argument("--out", help="output directory (default runs/<name>)")
    run.add_argument("--seed", type=int, help="override experiment.seed")
    run.add_argument("--trials", type=int, help="override experiment.trials")
    run.add_argument("--jobs", type=int, default=1, help="worker processes; results do not depend on it")
    run.set_defaults(func=cmd_run)

    cert = sub.add_parser("certify-graph", help="check the reduced-graph source-component condition")
    cert.add_argument("edge_list", help="edge-list file: M on the first line, then 'j i' per edge")
    cert.add_argument("--b", type=int, required=True)
    cert.add_argument("--mode", choices=("exact", "sampled"), default="exact")
    cert.add_argument("--samples", type=int, default=10000, help="trials for sampled mode")
    cert.add_argument("--seed", type=int, default=0)
    cert.set_defaults(func=cmd_certify_graph)

    gen = sub.add_parser("gen-data", help="write a synthetic two-class dataset")
    gen.add_argument("--P", type=int, required=True)
    gen.add_argument("--count", type=int, required=True)
    gen.add_argument("--margin", type=float, default=1.0)
    gen.add_argument("--noise", type=float, default=0.0)
    gen.add_argument("--test-fraction", type=float, default=0.0)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=cmd_gen_data)

    ver = sub.add_parser("version", help="print the package version")
    ver.set_defaults(func=cmd_version)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
