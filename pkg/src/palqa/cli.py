"""Command-line entry point: run experiments, compare strategies, serve a
backend over the wire protocol.

Machine-readable output goes to files in the run directory; progress goes to
stderr. Exit codes: 0 success, 2 missing input, 3 invalid config or backend
spec, 4 backend unreachable, 1 anything else.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

from . import report
from .data import (
    Dataset,
    DatasetValidationError,
    SquadParseError,
    parse_squad,
    subset_one_per_context,
)
from .loop import (
    ALConfig,
    ConfigError,
    MidRunBackendFailure,
    format_config,
    parse_config,
    run_experiment,
)
from .metrics import LearningCurve
from .synthetic import SyntheticBackend
from .wire import TransportError, WireBackend

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_MISSING_INPUT = 2
EXIT_BAD_CONFIG = 3
EXIT_BACKEND_UNREACHABLE = 4


class BackendSpecError(ValueError):
    pass


def make_backend(spec: str):
    """Parse "synthetic:<seed>", "wire:cmd:<command>" or "wire:tcp:<host:port>"."""
    if spec == "synthetic":
        return SyntheticBackend(0)
    if spec.startswith("synthetic:"):
        seed_text = spec.split(":", 1)[1]
        try:
            return SyntheticBackend(int(seed_text))
        except ValueError:
            raise BackendSpecError(f"bad synthetic seed: {seed_text!r}") from None
    if spec.startswith("wire:cmd:"):
        return WireBackend.spawn(spec[len("wire:cmd:") :])
    if spec.startswith("wire:tcp:"):
        address = spec[len("wire:tcp:") :]
        host, _, port = address.rpartition(":")
        if not host or not port.isdigit():
            raise BackendSpecError(f"bad tcp address: {address!r}")
        return WireBackend.connect_tcp(host, int(port))
    raise BackendSpecError(
        f"unknown backend spec {spec!r}; expected synthetic:<seed>, "
        f"wire:cmd:<command> or wire:tcp:<host:port>"
    )


def _load_dataset(path: str) -> Dataset:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"dataset file not found: {path}")
    with open(p, "rb") as fh:
        return parse_squad(fh)


def _err(message: str) -> None:
    print(f"palqa: error: {message}", file=sys.stderr)


def cmd_run(args: argparse.Namespace) -> int:
    try:
        if args.config:
            cfg_path = Path(args.config)
            if not cfg_path.exists():
                _err(f"config file not found: {args.config}")
                return EXIT_MISSING_INPUT
            cfg = parse_config(cfg_path.read_text())
        else:
            cfg = ALConfig()
        if args.strategy:
            cfg.strategy = args.strategy
        if args.seed is not None:
            cfg.rng_seed = args.seed
        cfg.validate()
    except ConfigError as e:
        _err(f"invalid config: {e}")
        return EXIT_BAD_CONFIG

    try:
        dataset = _load_dataset(args.dataset)
        eval_set = _load_dataset(args.eval_dataset) if args.eval_dataset else None
    except FileNotFoundError as e:
        _err(str(e))
        return EXIT_MISSING_INPUT
    except (SquadParseError, DatasetValidationError) as e:
        _err(f"cannot load dataset: {e}")
        return EXIT_MISSING_INPUT

    if cfg.one_per_context:
        dataset = subset_one_per_context(dataset)

    try:
        backend = make_backend(args.backend)
    except BackendSpecError as e:
        _err(str(e))
        return EXIT_BAD_CONFIG
    except TransportError as e:
        _err(f"backend unreachable: {e}")
        return EXIT_BACKEND_UNREACHABLE

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.txt").write_text(format_config(cfg))

    def progress(record):
        f1 = f" f1={record.f1:.2f}" if record.f1 is not None else ""
        fb = " (fallback)" if record.fallback else ""
        print(
            f"iteration {record.t}: labeled {record.n_labeled}, "
            f"unlabeled {record.n_unlabeled}{f1}{fb}",
            file=sys.stderr,
        )

    try:
        log = run_experiment(dataset, cfg, backend, eval_set=eval_set, progress=progress)
    except MidRunBackendFailure as e:
        # flush everything completed so far before reporting the failure
        _write_run_outputs(e.partial_log, cfg, out_dir)
        _err(str(e))
        return EXIT_BACKEND_UNREACHABLE
    except TransportError as e:
        _err(f"backend unreachable: {e}")
        return EXIT_BACKEND_UNREACHABLE
    finally:
        if isinstance(backend, WireBackend):
            backend.close()

    _write_run_outputs(log, cfg, out_dir)
    print(f"run complete: {out_dir}", file=sys.stderr)
    return EXIT_OK


def _write_run_outputs(log, cfg: ALConfig, out_dir: Path) -> None:
    report.write_ndjson(log, out_dir / "log.ndjson")
    report.write_summary_csv(log, out_dir / "summary.csv")
    curve = log.curve()
    if len(curve):
        report.write_eval_csv(log, out_dir / "eval.csv")
        report.write_curve_dat(curve, out_dir / "curve.dat")
        report.plot_learning_curve(curve, out_dir / "curve.png", label=cfg.strategy)


def _read_run_dir(run_dir: Path) -> tuple[str, LearningCurve]:
    config_path = run_dir / "config.txt"
    summary_path = run_dir / "summary.csv"
    for p in (config_path, summary_path):
        if not p.exists():
            raise FileNotFoundError(f"not a completed run directory: {p} missing")
    strategy = "?"
    for line in config_path.read_text().splitlines():
        if line.startswith("strategy="):
            strategy = line.partition("=")[2].strip()
    checkpoints = []
    with open(summary_path, newline="") as fh:
        for row in csv.DictReader(fh):
            if row["f1"]:
                checkpoints.append((int(row["t"]), float(row["f1"])))
    if not checkpoints:
        raise ValueError(f"run {run_dir} has no evaluated checkpoints")
    return strategy, LearningCurve(checkpoints)


def cmd_compare(args: argparse.Namespace) -> int:
    if len(args.runs) < 2:
        _err("compare needs at least two run directories")
        return EXIT_MISSING_INPUT
    rows = []
    try:
        for run in args.runs:
            rows.append(_read_run_dir(Path(run)))
    except FileNotFoundError as e:
        _err(str(e))
        return EXIT_MISSING_INPUT
    except ValueError as e:
        _err(str(e))
        return EXIT_RUNTIME

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        report.write_comparison_csv(rows, out_dir / "comparison.csv")
    except ValueError as e:
        _err(str(e))
        return EXIT_RUNTIME
    report.plot_comparison(dict(rows), out_dir / "comparison.png")
    print(f"comparison written: {out_dir}", file=sys.stderr)
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    from . import wire

    try:
        backend = make_backend(args.backend)
    except BackendSpecError as e:
        _err(str(e))
        return EXIT_BAD_CONFIG
    if args.tcp:
        host, _, port = args.tcp.rpartition(":")
        if not host or not port.isdigit():
            _err(f"bad tcp address: {args.tcp!r}")
            return EXIT_BAD_CONFIG
        wire.serve_tcp(backend, host, int(port), ready_out=sys.stderr)
    else:
        wire.serve_stdio(backend)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="palqa",
        description="Pool-based active learning engine for extractive QA",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment")
    run.add_argument("--config", help="flat key=value config file")
    run.add_argument("--dataset", required=True, help="SQuAD v1.1 JSON file")
    run.add_argument("--eval-dataset", help="separate evaluation set (defaults to the pool)")
    run.add_argument("--backend", required=True, help="synthetic:<seed> | wire:cmd:<command> | wire:tcp:<host:port>")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--strategy", help="override the config strategy")
    run.add_argument("--seed", type=int, help="override the config rng seed")
    run.set_defaults(func=cmd_run)

    compare = sub.add_parser("compare", help="tabulate completed runs")
    compare.add_argument("runs", nargs="+", help="run output directories")
    compare.add_argument("--out", required=True, help="output directory")
    compare.set_defaults(func=cmd_compare)

    serve = sub.add_parser("serve", help="expose a backend over the wire protocol")
    serve.add_argument("--backend", required=True)
    serve.add_argument("--tcp", help="host:port to listen on instead of stdio")
    serve.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
