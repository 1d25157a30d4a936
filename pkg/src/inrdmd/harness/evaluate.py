"""Held-out evaluation of trained models and the report document."""
from __future__ import annotations

import json
import time
from importlib import resources

import jsonschema
import numpy as np

from ..classic_dmd import DmdModel, dmd_fit, dmd_rollout
from ..data import TrajectorySet
from ..inr_dmd.training import Checkpoint, forecast_np
from .metrics import aggregate_rmse, rmse
from .timing import time_per_frame


def _schema() -> dict:
    return json.loads(resources.files(__package__).joinpath("report_schema.json").read_text())


def validate_report(report: dict) -> None:
    jsonschema.validate(report, _schema())


def _entry(i: int, code, series) -> dict:
    return {"index": int(i), "code": [float(c) for c in code],
            "per_step": series.per_step.tolist(), "aggregate": series.aggregate,
            "absolute_steps": np.flatnonzero(series.absolute).tolist()}


def _indices(ts: TrajectorySet, split: str) -> list[int]:
    idx = list(range(ts.n_traj)) if split == "all" else ts.indices(split)
    if not idx:
        raise ValueError(f"dataset has no {split!r} trajectories")
    return idx


def evaluate_checkpoint(ckpt: Checkpoint, ts: TrajectorySet, split: str = "test",
                        repeats: int = 3) -> dict:
    """Forecast every trajectory of ``split`` from its first frame."""
    t0 = time.perf_counter()
    pts = ts.grid.points()
    times = np.arange(ts.n_time) * ts.dt
    entries, series, frame_ms = [], [], []
    for i in _indices(ts, split):
        P = pts[ts.fluid(i)]
        U = ts.flat(i).reshape(ts.n_time, -1)
        bank = ckpt.model.bank(P, ts.codes[i])
        omega = ckpt.model.spectrum(ts.codes[i])
        pred = forecast_np(bank, omega, U[0], times)
        s = rmse(pred, U)
        series.append(s)
        entries.append(_entry(i, ts.codes[i], s))
        frame_ms.append(time_per_frame(bank, omega, U[0], times, repeats))
    report = {
        "model": "inr-dmd", "split": split, "trajectories": entries,
        "aggregate_rmse": aggregate_rmse(series), "n_params": ckpt.model.n_params,
        "timing": {"per_frame_ms": float(np.median(frame_ms)),
                   "wall_clock_s": time.perf_counter() - t0},
        "config": ckpt.config.to_dict(),
    }
    validate_report(report)
    return report


def fit_pooled_dmd(ts: TrajectorySet, rank: int, split: str = "train") -> DmdModel:
    trajs = [ts.flat(i).reshape(ts.n_time, -1) for i in _indices(ts, split)]
    n = {t.shape[1] for t in trajs}
    if len(n) != 1:
        raise ValueError("pooled DMD needs the same cell set in every trajectory")
    return dmd_fit(trajs, rank, ts.dt)


def evaluate_dmd(model: DmdModel, ts: TrajectorySet, split: str = "test") -> dict:
    t0 = time.perf_counter()
    entries, series = [], []
    for i in _indices(ts, split):
        U = ts.flat(i).reshape(ts.n_time, -1)
        s = rmse(dmd_rollout(model, U[0], ts.n_time - 1), U)
        series.append(s)
        entries.append(_entry(i, ts.codes[i], s))
    wall = time.perf_counter() - t0
    report = {
        "model": "dmd", "split": split, "trajectories": entries,
        "aggregate_rmse": aggregate_rmse(series),
        "n_params": int(model.modes.size * 2 + model.eigenvalues.size * 2),
        "timing": {"per_frame_ms": wall * 1e3 / (len(entries) * ts.n_time), "wall_clock_s": wall},
        "config": {"rank": model.rank, "dt": model.dt},
    }
    validate_report(report)
    return report
