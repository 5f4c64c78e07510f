"""Command-line entry point: ``mmfl run | grid | gen-data``."""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from mmfl.datagen import dump_dataset, generate
from mmfl.expio import ConfigError, load_config, with_cell, write_metrics
from mmfl.server import POLICIES, run_experiment

log = logging.getLogger("mmfl")


def _csv_list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in _csv_list(text)]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _policy_list(text: str) -> list[str]:
    items = _csv_list(text)
    bad = [p for p in items if p not in POLICIES]
    if bad or not items:
        raise argparse.ArgumentTypeError(f"unknown policy {bad}; choose from {', '.join(POLICIES)}")
    return items


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mmfl", description="Multi-model federated learning simulator")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment and write its metrics CSV")
    run.add_argument("--config", required=True, type=Path)
    run.add_argument("--out", required=True, type=Path)
    run.add_argument("--workers", type=int, default=1, help="threads for local training")

    grid = sub.add_parser("grid", help="sweep policies x clients-per-round, one CSV per cell")
    grid.add_argument("--config", required=True, type=Path)
    grid.add_argument("--policies", required=True, type=_policy_list)
    grid.add_argument("--clients-per-round", required=True, type=_int_list)
    grid.add_argument("--out-dir", required=True, type=Path)
    grid.add_argument("--jobs", type=int, default=1, help="cells run in parallel processes")

    gen = sub.add_parser("gen-data", help="write the experiment's dataset as text")
    gen.add_argument("--config", required=True, type=Path)
    gen.add_argument("--out", required=True, type=Path)
    return parser


def cell_filename(policy: str, k: int) -> str:
    return f"{policy}_K{k}.csv"


def _run_cell(cfg, out: Path, workers: int = 1) -> Path:
    rows = run_experiment(cfg, workers=workers)
    write_metrics(rows, out)
    return out


def _cmd_run(args) -> None:
    cfg = load_config(args.config)
    _run_cell(cfg, args.out, args.workers)
    log.info("wrote %s", args.out)


def _cmd_grid(args) -> None:
    base = load_config(args.config)
    cells = []
    for policy in args.policies:
        for k in args.clients_per_round:
            cfg = with_cell(base, policy, k)
            problems = cfg.problems()
            if problems:
                raise ConfigError(f"cell {policy}, K={k}: {problems[0][1]}")
            cells.append((cfg, args.out_dir / cell_filename(policy, k)))
    args.out_dir.mkdir(parents=True, exist_ok=True)
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            for out in pool.map(_run_cell, *zip(*cells)):
                log.info("wrote %s", out)
    else:
        for cfg, out in cells:
            _run_cell(cfg, out)
            log.info("wrote %s", out)


def _cmd_gen_data(args) -> None:
    cfg = load_config(args.config)
    dump_dataset(generate(cfg.dataset_spec()), args.out)
    log.info("wrote %s", args.out)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    handler = {"run": _cmd_run, "grid": _cmd_grid, "gen-data": _cmd_gen_data}[args.command]
    try:
        handler(args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"mmfl: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
