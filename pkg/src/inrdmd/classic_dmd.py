"""Classical (exact) DMD from snapshot matrices."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import numerics as nx


@dataclass
class DmdModel:
    rank: int
    eigenvalues: np.ndarray  # discrete mu_j
    omega: np.ndarray  # continuous log(mu_j) / dt
    modes: np.ndarray  # (n_state, rank), unit-norm columns
    dt: float
    amplitudes: np.ndarray

    def to_dict(self) -> dict:
        c = lambda a: {"re": np.real(a).tolist(), "im": np.imag(a).tolist()}
        return {"rank": self.rank, "dt": self.dt, "eigenvalues": c(self.eigenvalues),
                "omega": c(self.omega), "amplitudes": c(self.amplitudes),
                "modes": {"re": self.modes.real.tolist(), "im": self.modes.imag.tolist()}}

    @classmethod
    def from_dict(cls, d: dict) -> "DmdModel":
        c = lambda e: np.asarray(e["re"]) + 1j * np.asarray(e["im"])
        return cls(rank=int(d["rank"]), eigenvalues=c(d["eigenvalues"]), omega=c(d["omega"]),
                   modes=c(d["modes"]), dt=float(d["dt"]), amplitudes=c(d["amplitudes"]))


def continuous_eigs(mu, dt: float) -> np.ndarray:
    """Principal-branch ``log(mu) / dt``."""
    mu = np.asarray(mu, dtype=np.complex128)
    if dt <= 0:
        raise ValueError("dt must be positive")
    if np.any(mu == 0):
        raise ValueError("zero discrete eigenvalue has no continuous counterpart")
    return np.log(mu) / dt


def snapshot_pairs(trajectories) -> tuple[np.ndarray, np.ndarray]:
    """Stack ``(n_time, n_state)`` trajectories into ``X`` and ``X'``.

    Several trajectories are pooled column-wise; pairs never straddle two
    trajectories.
    """
    if isinstance(trajectories, np.ndarray) and trajectories.ndim == 2:
        trajectories = [trajectories]
    X, Xp = [], []
    for traj in trajectories:
        traj = np.asarray(traj)
        X.append(traj[:-1].T)
        Xp.append(traj[1:].T)
    return np.hstack(X), np.hstack(Xp)


def dmd_fit(trajectories, r: int, dt: float) -> DmdModel:
    """Rank-``r`` exact DMD.

    ``trajectories`` is one ``(n_time, n_state)`` array or a list of them.
    Modes use the exact lift ``X' V S^-1 w / mu``; a zero eigenvalue falls
    back to the projected mode ``U w``.  Modes are returned in order of
    decreasing amplitude of the first snapshot's expansion.
    """
    X, Xp = snapshot_pairs(trajectories)
    if X.shape[1] < r:
        raise ValueError(f"need at least {r + 1} snapshots for rank {r}")
    svd = nx.svd_truncated(X, r)
    if svd.singular_values[-1] <= nx.RANK_TOL * svd.singular_values[0]:
        raise nx.IllConditionedBasisError(
            svd.singular_values[0] / max(svd.singular_values[-1], np.finfo(float).tiny),
            "snapshot matrix has numerical rank below r")
    B = Xp @ (svd.V / svd.singular_values)
    Atilde = svd.U.conj().T @ B
    eig = nx.eig_dense(Atilde)
    mu, w = eig.values.copy(), eig.vectors
    # eigenvalues at round-off level relative to the spectral radius are zero
    mu[np.abs(mu) <= nx.RANK_TOL * max(np.abs(mu).max(), np.finfo(float).tiny)] = 0
    modes = np.empty((X.shape[0], r), dtype=np.complex128)
    for j in range(r):
        if mu[j] == 0:
            warnings.warn(f"DMD eigenvalue {j} is zero; using projected mode", RuntimeWarning)
            modes[:, j] = svd.U @ w[:, j]
        else:
            modes[:, j] = (B @ w[:, j]) / mu[j]
    modes /= np.linalg.norm(modes, axis=0)
    b = nx.least_squares_solve(modes, X[:, 0].astype(np.complex128), "DMD amplitudes")
    order = np.argsort(-np.abs(b), kind="stable")
    mu, modes, b = mu[order], modes[:, order], b[order]
    with np.errstate(divide="ignore"):
        omega = np.where(mu == 0, -np.inf + 0j, np.log(np.where(mu == 0, 1, mu)) / dt)
    return DmdModel(rank=r, eigenvalues=mu, omega=omega, modes=modes, dt=dt, amplitudes=b)


def dmd_predict(model: DmdModel, x0, k) -> np.ndarray:
    """State ``k`` steps after ``x0`` (``k`` may be an array of step counts).

    Real input yields the real part of the forecast.
    """
    x0 = np.asarray(x0)
    z = nx.least_squares_solve(model.modes, x0.astype(np.complex128), "DMD projection")
    ks = np.atleast_1d(np.asarray(k))
    if np.any(ks < 0):
        raise ValueError("step count must be non-negative")
    powers = model.eigenvalues[None, :] ** ks[:, None]
    out = (powers * z) @ model.modes.T
    if not np.iscomplexobj(x0):
        out = out.real
    return out[0] if np.ndim(k) == 0 else out


def dmd_rollout(model: DmdModel, x0, n_steps: int) -> np.ndarray:
    """Forecast ``n_steps + 1`` frames starting from (the projection of) ``x0``."""
    return dmd_predict(model, x0, np.arange(n_steps + 1))
