"""One cell of the experiment matrix: dataset, model fitting, rollout and scoring."""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import baselines as bl
from . import neural_ode as no
from . import ols
from .config import ExperimentConfig
from .dataset import (MethodologyData, SplitSpec, build_methodology, read_csv, window_arrays, write_csv,
                      write_meta)
from .metrics import MfeSeries, mfe_series, steady_descriptors
from .params import ModelParams, load_params, save_params
from .regime import classify_regime
from .simulator import run_from_seed
from .state import Trajectory

SUMMARY_FIELDS = ["model", "phase", "ic", "n_agents", "seed", "test_seed", "test_len", "tail_mfe",
                  "tail_mfe_norm", "regime_true", "regime_pred", "regime_match"]

# offset between the seeds of extra training runs
EXTRA_RUN_SEED_STRIDE = 1000


class ModelDataMismatch(ValueError):
    pass


def model_window(cfg: ExperimentConfig) -> int:
    if cfg.model == "ols":
        return cfg.ols_in_samples
    if cfg.model == "node":
        return 1
    return cfg.window_len


def make_dataset(cfg: ExperimentConfig) -> MethodologyData:
    return build_methodology(cfg.methodology, cfg.swarm_params(), cfg.seed, cfg.test_seed, model_window(cfg))


def forecaster_spec(cfg: ExperimentConfig) -> bl.ForecasterSpec:
    return bl.ForecasterSpec(cfg.model, cfg.n_agents, cfg.window_len, cfg.hidden, cfg.rnn_layers)


def node_arch(cfg: ExperimentConfig) -> no.NodeArchitecture:
    return no.NodeArchitecture(cfg.node_hidden, cfg.node_depth)


def training_runs(cfg: ExperimentConfig, data: MethodologyData) -> List[Trajectory]:
    """The methodology's training segment plus ``train_runs - 1`` further runs of the same length."""
    runs = [data.train]
    for k in range(1, cfg.train_runs):
        runs.append(run_from_seed(cfg.swarm_params(), cfg.seed + k * EXTRA_RUN_SEED_STRIDE,
                                  data.split.train_len - 1))
    return runs


@dataclass
class TrainedModel:
    kind: str
    model: object                     # OlsModel or ModelParams
    loss_history: Optional[List[float]] = None


def stacked_windows(runs: List[Trajectory], window_len: int, horizon: int = 1):
    pairs = [window_arrays(r, window_len, horizon) for r in runs]
    return np.concatenate([p[0] for p in pairs]), np.concatenate([p[1] for p in pairs])


def train_model(cfg: ExperimentConfig, data: MethodologyData) -> TrainedModel:
    runs = training_runs(cfg, data)
    if cfg.model == "ols":
        X, Y = stacked_windows(runs, cfg.ols_in_samples, cfg.ols_horizon)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            model = ols.fit_ols(X, Y, cfg.ridge, cfg.ols_horizon)
        return TrainedModel("ols", model)
    if cfg.model == "node":
        tc = no.NodeTrainConfig(cfg.solver_step, cfg.node_learning_rate, cfg.node_epochs,
                                segment_length=cfg.node_segment_length, seed=cfg.seed)
        segs = no.make_segments(runs, cfg.node_segment_length, cfg.node_segment_stride)
        params, curve = no.train_node(segs, node_arch(cfg), tc, data_dt=data.train.dt)
        return TrainedModel("node", params, curve)
    spec = forecaster_spec(cfg)
    overrides = dict(optimizer=cfg.optimizer, batch_size=cfg.batch_size, seed=cfg.seed, standardize=cfg.standardize)
    if cfg.learning_rate is not None:
        overrides["learning_rate"] = cfg.learning_rate
    if cfg.epochs is not None:
        overrides["epochs"] = cfg.epochs
    X, Y = stacked_windows(runs, cfg.window_len)
    params, history = bl.train(spec, X, Y, bl.default_train_config(spec.kind, **overrides))
    return TrainedModel(cfg.model, params, history)


def predict_test(cfg: ExperimentConfig, trained: TrainedModel, data: MethodologyData) -> Trajectory:
    n = len(data.test)
    if trained.kind == "ols":
        model = trained.model
        if model.n_agents != data.test.n_agents or model.in_samples != len(data.seed_window):
            raise ModelDataMismatch(f"OLS model (m={model.in_samples}, N={model.n_agents}) does not match data "
                                    f"(window {len(data.seed_window)}, N={data.test.n_agents})")
        return ols.ols_rollout(model, data.seed_window, n)
    params: ModelParams = trained.model
    if int(params.descriptor.get("n_agents", data.test.n_agents)) != data.test.n_agents and trained.kind != "node":
        raise ModelDataMismatch(f"model trained for {params.descriptor['n_agents']} agents, data has "
                                f"{data.test.n_agents}")
    if trained.kind == "node":
        arch = no.NodeArchitecture.from_descriptor(params.descriptor)
        step = float(params.descriptor["solver_step"])
        stride = int(round(data.test.dt / step))
        ic = data.seed_window[len(data.seed_window) - 1]
        states = no.node_rollout(arch, params, ic, n * stride, step)
        return Trajectory(states.data[stride::stride], data.test.dt, data.test.t0)
    spec = bl.ForecasterSpec.from_descriptor(params.descriptor)
    if spec.window_len != len(data.seed_window):
        raise ModelDataMismatch(f"model window {spec.window_len} does not match seed window "
                                f"{len(data.seed_window)}")
    return bl.rollout(spec, params, data.seed_window, n)


@dataclass
class Evaluation:
    prediction: Trajectory
    mfe: MfeSeries
    summary: dict
    descriptors: dict


def score(cfg: ExperimentConfig, truth: Trajectory, prediction: Trajectory) -> Evaluation:
    series = mfe_series(truth, prediction)
    d_true = steady_descriptors(truth, cfg.tail_frac)
    d_pred = steady_descriptors(prediction, cfg.tail_frac)
    r_true = classify_regime(truth, cfg.tail_frac)
    r_pred = classify_regime(prediction, cfg.tail_frac)
    tail = series.tail_mean(cfg.tail_frac)
    summary = {
        "model": cfg.model, "phase": cfg.phase, "ic": cfg.ic, "n_agents": cfg.n_agents, "seed": cfg.seed,
        "test_seed": cfg.test_seed if cfg.ic == "different" else cfg.seed, "test_len": len(series),
        "tail_mfe": tail,
        "tail_mfe_norm": tail / d_true.ring_radius_mean if d_true.ring_radius_mean > 0 else float("inf"),
        "regime_true": r_true.label.value, "regime_pred": r_pred.label.value,
        "regime_match": r_true.label == r_pred.label,
    }
    descriptors = {f"true.{k}": v for k, v in d_true.as_dict().items()}
    descriptors.update({f"pred.{k}": v for k, v in d_pred.as_dict().items()})
    descriptors.update({"true.regime": r_true.label.value, "pred.regime": r_pred.label.value})
    return Evaluation(prediction, series, summary, descriptors)


# --- persistence -----------------------------------------------------------

def save_model(trained: TrainedModel, out: Path) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    if trained.kind == "ols":
        path = out / "model.csv"
        ols.save_ols(trained.model, path)
    else:
        path = out / "model.params"
        save_params(trained.model, path)
    if trained.loss_history is not None:
        with open(out / "loss_history.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "loss"])
            for e, loss in enumerate(trained.loss_history, start=1):
                w.writerow([e, f"{loss:.17g}"])
    return path


def load_model(cfg: ExperimentConfig, out: Path) -> TrainedModel:
    if cfg.model == "ols":
        return TrainedModel("ols", ols.load_ols(out / "model.csv"))
    params = load_params(out / "model.params")
    kind = params.descriptor.get("kind")
    if kind != cfg.model:
        raise ModelDataMismatch(f"model file holds a {kind!r} model, config asks for {cfg.model!r}")
    return TrainedModel(kind, params)


def write_summary(rows: List[dict], path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SUMMARY_FIELDS)
        w.writeheader()
        for row in rows:
            w.writerow({k: (f"{v:.17g}" if isinstance(v, float) else v) for k, v in row.items()})


def read_summary(path: Path) -> List[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def save_dataset(data: MethodologyData, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    write_csv(data.train, out / "train.csv")
    write_csv(data.test, out / "test.csv")
    write_csv(data.seed_window, out / "seed_window.csv")


def load_dataset(cfg: ExperimentConfig, directory: Path) -> MethodologyData:
    train, test, seed_window = (read_csv(directory / f"{n}.csv") for n in ("train", "test", "seed_window"))
    X, Y = window_arrays(train, max(1, model_window(cfg)))
    split = SplitSpec(len(train), len(test), len(seed_window))
    return MethodologyData(cfg.methodology, split, train, test, seed_window, X, Y)


def write_evaluation(ev: Evaluation, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    ev.mfe.to_csv(out / "mfe.csv")
    write_csv(ev.prediction, out / "prediction.csv")
    write_meta(out / "descriptors.txt", ev.descriptors)
    write_summary([ev.summary], out / "summary.csv")
