"""``swarm-sysid`` command-line front end.

Every artifact is a pure function of the resolved configuration, which is
also written next to the outputs as ``config.txt``.
"""
from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import List, Optional

from . import experiment as ex
from .config import MODELS, ConfigError, ExperimentConfig, dump_config, load_config, parse_pairs
from .dataset import ALL_METHODOLOGIES, read_csv, write_csv
from .regime import classify_regime
from .simulator import run_from_seed

PROG = "swarm-sysid"
THREADS_ENV = "SWARM_SYSID_THREADS"


def _config(args) -> ExperimentConfig:
    overrides = parse_pairs(args.set or [], "--set")
    for key in ("seed", "out", "model", "phase", "ic"):
        val = getattr(args, key, None)
        if val is not None:
            overrides[key] = val
    return load_config(args.config, overrides)


def _out(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    dump_config(cfg, out / "config.txt")
    return out


def _dataset(cfg: ExperimentConfig, out: Path):
    directory = out / "dataset"
    if (directory / "test.csv").exists():
        return ex.load_dataset(cfg, directory)
    data = ex.make_dataset(cfg)
    ex.save_dataset(data, directory)
    return data


def cmd_simulate(cfg: ExperimentConfig) -> Path:
    out = _out(cfg)
    traj = run_from_seed(cfg.swarm_params(), cfg.seed, cfg.n_steps)
    label = classify_regime(traj, cfg.tail_frac)
    meta = {(k if k == "regime" else f"regime.{k}"): v for k, v in label.as_dict().items()}
    write_csv(traj, out / "trajectory.csv", meta)
    return out / "trajectory.csv"


def cmd_make_dataset(cfg: ExperimentConfig) -> Path:
    out = _out(cfg)
    ex.save_dataset(ex.make_dataset(cfg), out / "dataset")
    return out / "dataset"


def cmd_train(cfg: ExperimentConfig) -> Path:
    out = _out(cfg)
    data = _dataset(cfg, out)
    return ex.save_model(ex.train_model(cfg, data), out)


def cmd_evaluate(cfg: ExperimentConfig, pred_csv: Optional[str] = None) -> dict:
    out = _out(cfg)
    data = _dataset(cfg, out)
    if pred_csv:
        prediction = read_csv(pred_csv)
    else:
        prediction = ex.predict_test(cfg, ex.load_model(cfg, out), data)
    evaluation = ex.score(cfg, data.test, prediction)
    ex.write_evaluation(evaluation, out)
    return evaluation.summary


def run_cell(cfg: ExperimentConfig) -> dict:
    """Train and evaluate one (model, methodology) cell in ``cfg.out``."""
    cmd_train(cfg)
    return cmd_evaluate(cfg)


def cell_configs(cfg: ExperimentConfig, models: List[str], methodologies: List[str]) -> List[ExperimentConfig]:
    cells = []
    for model in models:
        for name in methodologies:
            phase, _, ic = name.partition("-")
            cells.append(replace(cfg, model=model, phase=phase, ic=ic, out=str(Path(cfg.out) / model / name)))
    return cells


def thread_cap() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return n


def cmd_compare(cfg: ExperimentConfig, models: List[str], methodologies: List[str], rerun: bool = False) -> Path:
    out = _out(cfg)
    cells = cell_configs(cfg, models, methodologies)
    todo = [c for c in cells if rerun or not (Path(c.out) / "summary.csv").exists()]
    workers = min(thread_cap(), max(1, len(todo)))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run_cell, todo))
    else:
        for c in todo:
            run_cell(c)
    rows = [ex.read_summary(Path(c.out) / "summary.csv")[0] for c in cells]
    ex.write_summary(rows, out / "comparison.csv")
    return out / "comparison.csv"


def _csv_list(text: str, allowed, what: str) -> List[str]:
    items = [s.strip() for s in text.split(",") if s.strip()]
    bad = [s for s in items if s not in allowed]
    if bad or not items:
        raise argparse.ArgumentTypeError(f"invalid {what} {bad or text!r}; choose from {', '.join(allowed)}")
    return items


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value configuration file")
    common.add_argument("--seed", type=int, help="training-run seed")
    common.add_argument("--out", help="output directory")
    common.add_argument("--model", choices=MODELS)
    common.add_argument("--phase", choices=("transient", "steady"))
    common.add_argument("--ic", choices=("same", "different"))
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any config key")

    parser = argparse.ArgumentParser(prog=PROG, description="Swarm system identification experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="simulate one run and classify its regime")
    sub.add_parser("make-dataset", parents=[common], help="write train/test/seed-window CSVs")
    sub.add_parser("train", parents=[common], help="fit a model, write parameters and loss history")
    ev = sub.add_parser("evaluate", parents=[common], help="roll out a trained model and score it")
    ev.add_argument("--pred-csv", help="score this trajectory CSV instead of a model rollout")
    cmp_ = sub.add_parser("compare", parents=[common], help="run a grid of cells and tabulate them")
    methodology_names = [m.name for m in ALL_METHODOLOGIES]
    cmp_.add_argument("--models", default="ols,mlp,rnn,cnn,node",
                      type=lambda s: _csv_list(s, MODELS, "model"))
    cmp_.add_argument("--methodologies", default=",".join(methodology_names),
                      type=lambda s: _csv_list(s, methodology_names, "methodology"))
    cmp_.add_argument("--rerun", action="store_true", help="recompute cells that already have a summary")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _config(args)
        if args.command == "simulate":
            result = cmd_simulate(cfg)
        elif args.command == "make-dataset":
            result = cmd_make_dataset(cfg)
        elif args.command == "train":
            result = cmd_train(cfg)
        elif args.command == "evaluate":
            summary = cmd_evaluate(cfg, args.pred_csv)
            result = f"tail_mfe={summary['tail_mfe']:.6g} regime_match={summary['regime_match']}"
        else:
            result = cmd_compare(cfg, args.models, args.methodologies, args.rerun)
    except (ConfigError, ValueError, OSError, ArithmeticError, KeyError) as exc:
        print(f"{PROG}: error: {exc}", file=sys.stderr)
        return 1
    print(result)
    return 0


if __name__ == "__main__":
    sys.exit(main())
