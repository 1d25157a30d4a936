"""Viscous Burgers on a periodic interval with GRF initial data."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..data import Grid
from .spectral import ETDRK4, BlowUpError, dealias_mask, wavenumbers


@dataclass(frozen=True)
class GrfSpec:
    mean: float = 0.0
    n_modes: int = 512
    gamma: float = 2.5
    tau: float = 7.0
    sigma: float = 49.0
    seed: int = 0

    def __post_init__(self):
        if self.n_modes < 1:
            raise ValueError("GRF needs at least one mode")
        if self.gamma <= 0.5:
            raise ValueError("gamma must exceed 1/2 for a summable spectrum")

    def mode_std(self) -> np.ndarray:
        """Standard deviations ``lambda_k`` for ``k = 1..K``."""
        k = np.arange(1, self.n_modes + 1)
        return math.sqrt(2.0) * abs(self.sigma) * ((2 * np.pi * k) ** 2 + self.tau ** 2) ** (-self.gamma / 2)


def grf_sample(spec: GrfSpec, grid: Grid) -> np.ndarray:
    """Draw one periodic Gaussian random field on a 1-D grid."""
    if grid.ndim != 1 or not grid.periodic[0]:
        raise ValueError("GRF sampling needs a periodic 1-D grid")
    rng = np.random.default_rng(spec.seed)
    lam = spec.mode_std()
    a = rng.standard_normal(spec.n_modes) * lam
    b = rng.standard_normal(spec.n_modes) * lam
    x = grid.axes()[0] / grid.extents[0]
    k = np.arange(1, spec.n_modes + 1)
    phase = 2 * np.pi * np.outer(x - 0.5, k)
    return spec.mean + np.cos(phase) @ a + np.sin(phase) @ b


def burgers_simulate(u0, nu: float, T: float, n_steps: int, grid: Grid,
                     cfl: float = 0.4) -> np.ndarray:
    """Integrate ``u_t + (u^2/2)_x = nu u_xx`` and return ``n_steps + 1``
    snapshots at ``t = k T / n_steps``.

    Internal steps subdivide each output interval so that
    ``dt max|u| <= cfl dx``; ``max|u|`` cannot grow for viscous Burgers.
    """
    if nu <= 0:
        raise ValueError("viscosity must be positive")
    if grid.ndim != 1 or not grid.periodic[0]:
        raise ValueError("Burgers solver needs a periodic 1-D grid")
    u0 = np.asarray(u0, dtype=np.float64)
    n = grid.dims[0]
    k = wavenumbers(n, grid.extents[0], real=True)
    keep = dealias_mask(n, real=True)
    ik_half = -0.5j * k * keep

    def nonlinear(v):
        u = np.fft.irfft(v * keep, n=n)
        return ik_half * np.fft.rfft(u * u)

    dt_out = T / n_steps
    umax = float(np.max(np.abs(u0)))
    dx = grid.extents[0] / n
    sub = max(1, math.ceil(dt_out * umax / (cfl * dx))) if umax > 0 else 1
    stepper = ETDRK4(-nu * k ** 2, dt_out / sub, nonlinear)

    out = np.empty((n_steps + 1, n))
    out[0] = u0
    v = np.fft.rfft(u0)
    for s in range(1, n_steps + 1):
        for _ in range(sub):
            v = stepper.step(v)
        u = np.fft.irfft(v, n=n)
        if not np.all(np.isfinite(u)):
            raise BlowUpError(s)
        out[s] = u
    return out
