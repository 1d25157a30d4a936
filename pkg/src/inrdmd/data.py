"""Trajectory containers shared by the generators, the models and the CLI."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Grid:
    """Uniform grid. ``dims``, ``extents`` and ``periodic`` are listed in
    array-axis order, so a 2-D field of shape ``(nz, nx)`` has
    ``dims=(nz, nx)`` and ``extents=(Lz, Lx)``."""

    dims: tuple
    extents: tuple
    periodic: tuple

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        object.__setattr__(self, "extents", tuple(float(e) for e in self.extents))
        object.__setattr__(self, "periodic", tuple(bool(p) for p in self.periodic))
        if not (len(self.dims) == len(self.extents) == len(self.periodic)):
            raise ValueError("dims, extents and periodic must have equal length")
        if min(self.dims) < 1 or min(self.extents) <= 0:
            raise ValueError(f"invalid grid {self.dims} / {self.extents}")

    @property
    def ndim(self) -> int:
        return len(self.dims)

    @property
    def size(self) -> int:
        return int(np.prod(self.dims))

    def spacing(self) -> tuple:
        return tuple(L / n if p else L / max(n - 1, 1)
                     for n, L, p in zip(self.dims, self.extents, self.periodic))

    def axes(self) -> list[np.ndarray]:
        """Node coordinates per axis; periodic axes exclude the right end."""
        return [np.arange(n) * h for n, h in zip(self.dims, self.spacing())]

    def points(self) -> np.ndarray:
        """All node coordinates as an ``(N, ndim)`` array in row-major order."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def to_dict(self) -> dict:
        return {"dims": list(self.dims), "extents": list(self.extents),
                "periodic": list(self.periodic)}

    @classmethod
    def from_dict(cls, d: dict) -> "Grid":
        return cls(tuple(d["dims"]), tuple(d["extents"]), tuple(d["periodic"]))


@dataclass
class TrajectorySet:
    """A family of snapshot sequences, one per physics code.

    ``fields`` has shape ``(n_traj, n_time, n_channels, *grid.dims)``;
    ``codes`` has shape ``(n_traj, code_dim)``; ``mask`` (optional, bool,
    shape ``(n_traj, *grid.dims)``) is True on solid cells.
    """

    fields: np.ndarray
    codes: np.ndarray
    dt: float
    grid: Grid
    channels: list
    mask: np.ndarray | None = None
    split: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.fields = np.asarray(self.fields, dtype=np.float64)
        self.codes = np.asarray(self.codes, dtype=np.float64).reshape(len(self.fields), -1)
        if self.fields.shape[3:] != self.grid.dims:
            raise ValueError(f"field shape {self.fields.shape} does not match grid {self.grid.dims}")
        if self.fields.shape[2] != len(self.channels):
            raise ValueError("channel names do not match field channels")
        if self.mask is not None:
            self.mask = np.asarray(self.mask, dtype=bool)
            if self.mask.shape != (self.n_traj,) + self.grid.dims:
                raise ValueError(f"mask shape {self.mask.shape} invalid")
        if not self.split:
            self.split = ["train"] * self.n_traj
        if len(self.split) != self.n_traj:
            raise ValueError("split labels must match trajectory count")

    @property
    def n_traj(self) -> int:
        return self.fields.shape[0]

    @property
    def n_time(self) -> int:
        return self.fields.shape[1]

    @property
    def n_channels(self) -> int:
        return self.fields.shape[2]

    @property
    def code_dim(self) -> int:
        return self.codes.shape[1]

    def fluid(self, i: int) -> np.ndarray:
        """Flat boolean index of non-solid cells for trajectory ``i``."""
        if self.mask is None:
            return np.ones(self.grid.size, dtype=bool)
        return ~self.mask[i].ravel()

    def flat(self, i: int) -> np.ndarray:
        """Trajectory ``i`` as ``(n_time, n_channels, n_fluid)``."""
        u = self.fields[i].reshape(self.n_time, self.n_channels, -1)
        return u[:, :, self.fluid(i)]

    def indices(self, label: str) -> list[int]:
        return [i for i, s in enumerate(self.split) if s == label]

    def subset(self, idx) -> "TrajectorySet":
        idx = list(idx)
        return TrajectorySet(
            fields=self.fields[idx], codes=self.codes[idx], dt=self.dt, grid=self.grid,
            channels=list(self.channels),
            mask=None if self.mask is None else self.mask[idx],
            split=[self.split[i] for i in idx], meta=dict(self.meta))
