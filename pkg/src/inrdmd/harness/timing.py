"""Per-frame inference timing."""
from __future__ import annotations

import statistics
import time

import numpy as np

from ..inr_dmd.training import forecast_np


def time_per_frame(bank: np.ndarray, omega: np.ndarray, u0, times, repeats: int = 5) -> float:
    """Median over ``repeats`` of (projection + full rollout) / frames, in ms.

    The bank and spectrum are passed in already evaluated, since deployment
    evaluates them once per code.
    """
    if repeats < 1:
        raise ValueError("repeats must be positive")
    n = len(times)
    runs = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        forecast_np(bank, omega, u0, times)
        runs.append((time.perf_counter() - t0) * 1e3 / n)
    return statistics.median(runs)


def synthetic_problem(n_cells: int, n_pairs: int, seed: int = 0):
    """Random conjugate-paired bank, stable spectrum and real state."""
    rng = np.random.default_rng(seed)
    cols = rng.standard_normal((n_cells, n_pairs)) + 1j * rng.standard_normal((n_cells, n_pairs))
    bank = np.hstack([cols, cols.conj()])
    w = -0.01 * rng.random(n_pairs) + 1j * rng.random(n_pairs)
    omega = np.concatenate([w, w.conj()])
    return bank, omega, rng.standard_normal(n_cells)
