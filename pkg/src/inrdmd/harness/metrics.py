"""Relative squared error per step and its aggregates."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class RmseSeries:
    per_step: np.ndarray
    absolute: np.ndarray  # True where the truth vanished and absolute MSE was used

    @property
    def aggregate(self) -> float:
        return float(np.mean(self.per_step))


def rmse(prediction, truth, mask=None) -> RmseSeries:
    """Per-step ``|u_hat - u|^2 / |u|^2`` over unmasked cells.

    ``prediction`` and ``truth`` have shape ``(T, ...)``; ``mask`` (True on
    excluded cells) broadcasts against one frame.  A step whose truth is
    identically zero reports the absolute mean squared error instead and is
    flagged in ``absolute``.
    """
    p = np.asarray(prediction, dtype=np.float64)
    u = np.asarray(truth, dtype=np.float64)
    if p.shape != u.shape:
        raise ValueError(f"prediction shape {p.shape} != truth shape {u.shape}")
    T = u.shape[0]
    p, u = p.reshape(T, -1), u.reshape(T, -1)
    if mask is not None:
        keep = ~np.broadcast_to(np.asarray(mask, dtype=bool), truth.shape[1:]).ravel()
        p, u = p[:, keep], u[:, keep]
    err = np.sum((p - u) ** 2, axis=1)
    den = np.sum(u ** 2, axis=1)
    absolute = den == 0
    n = max(u.shape[1], 1)
    per_step = np.where(absolute, err / n, err / np.where(absolute, 1.0, den))
    return RmseSeries(per_step=per_step, absolute=absolute)


def aggregate_rmse(series: list[RmseSeries]) -> float:
    """Mean over steps, then mean over trajectories."""
    if not series:
        raise ValueError("no series to aggregate")
    return float(np.mean([s.aggregate for s in series]))
