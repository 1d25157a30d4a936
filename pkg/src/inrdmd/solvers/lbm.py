"""D2Q9 BGK lattice Boltzmann with half-way bounce-back.

Arrays are indexed ``[direction, y, x]``; solid nodes (walls and obstacles)
are flagged in a boolean mask of shape ``(ny, nx)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

C = np.array([(0, 0), (1, 0), (0, 1), (-1, 0), (0, -1),
              (1, 1), (-1, 1), (-1, -1), (1, -1)])
W = np.array([4 / 9] + [1 / 9] * 4 + [1 / 36] * 4)
OPP = np.array([0, 3, 4, 1, 2, 7, 8, 5, 6])
CS = 1 / np.sqrt(3)


class LbmInstabilityError(FloatingPointError):
    def __init__(self, step: int, speed: float):
        self.step = step
        super().__init__(f"LBM unstable at step {step} (max |u| = {speed:.3g})")


@dataclass
class LbmConfig:
    """Lattice setup.

    ``boundary`` selects the outer boundaries:

    * ``"channel"``: velocity inlet on the left and unit-density outlet on
      the right (non-equilibrium extrapolation), no-slip walls top and
      bottom;
    * ``"periodic"``: periodic in both directions;
    * ``"periodic_x"``: periodic in x with no-slip walls top and bottom;
    * ``"closed"``: no-slip walls on all four sides.
    """

    nx: int = 201
    ny: int = 51
    inflow: tuple = (0.1, 0.0)
    nu: float = 0.01
    cylinder: tuple | None = (80.0, 25.0, 5.0)  # (cx, cy, radius)
    obstacle_mask: np.ndarray | None = None
    n_frames: int = 200
    stride: int = 10
    warmup: int = 0
    boundary: str = "channel"
    body_force: tuple = (0.0, 0.0)
    rho0: np.ndarray | None = None
    u0: np.ndarray | None = None
    outputs: tuple = ("speed",)
    max_speed: float = 0.5
    extra: dict = field(default_factory=dict)

    @property
    def tau(self) -> float:
        return 3.0 * self.nu + 0.5

    def validate(self) -> None:
        if np.hypot(*self.inflow) >= 0.3:
            raise ValueError("inflow speed must stay below 0.3 lattice units")
        if self.nu <= 0:
            raise ValueError("viscosity must be positive")
        if self.boundary not in ("channel", "periodic", "periodic_x", "closed"):
            raise ValueError(f"unknown boundary mode {self.boundary!r}")
        if self.cylinder is not None:
            cx, cy, r = self.cylinder
            if not (r < cx < self.nx - 1 - r and r < cy < self.ny - 1 - r):
                raise ValueError("cylinder must lie strictly inside the domain")

    def solid_mask(self) -> np.ndarray:
        mask = np.zeros((self.ny, self.nx), dtype=bool)
        if self.boundary in ("channel", "periodic_x", "closed"):
            mask[0, :] = mask[-1, :] = True
        if self.boundary == "closed":
            mask[:, 0] = mask[:, -1] = True
        if self.cylinder is not None:
            cx, cy, r = self.cylinder
            y, x = np.mgrid[:self.ny, :self.nx]
            mask |= (x - cx) ** 2 + (y - cy) ** 2 <= r ** 2
        if self.obstacle_mask is not None:
            mask |= np.asarray(self.obstacle_mask, dtype=bool)
        return mask


def equilibrium(rho, ux, uy):
    cu = C[:, 0, None, None] * ux + C[:, 1, None, None] * uy
    usq = ux * ux + uy * uy
    return W[:, None, None] * rho * (1 + 3 * cu + 4.5 * cu * cu - 1.5 * usq)


def macroscopic(f, force=(0.0, 0.0)):
    rho = f.sum(axis=0)
    ux = (np.tensordot(C[:, 0], f, axes=1) + 0.5 * force[0]) / rho
    uy = (np.tensordot(C[:, 1], f, axes=1) + 0.5 * force[1]) / rho
    return rho, ux, uy


class LbmSolver:
    """Stateful collide-and-stream stepper for one configuration."""

    def __init__(self, config: LbmConfig):
        config.validate()
        self.cfg = config
        self.solid = config.solid_mask()
        self.fluid = ~self.solid
        ny, nx = self.solid.shape
        rho = np.ones((ny, nx)) if config.rho0 is None else np.array(config.rho0, dtype=float)
        if config.u0 is not None:
            ux, uy = (np.array(a, dtype=float) for a in config.u0)
        elif config.boundary == "channel":
            ux, uy = np.full((ny, nx), config.inflow[0]), np.full((ny, nx), config.inflow[1])
        else:
            ux, uy = np.zeros((ny, nx)), np.zeros((ny, nx))
        ux, uy = np.where(self.solid, 0.0, ux), np.where(self.solid, 0.0, uy)
        self.f = equilibrium(rho, ux, uy)
        # nodes whose upstream neighbour along direction i is solid
        self.bounce = [np.roll(self.solid, (C[i, 1], C[i, 0]), axis=(0, 1)) & self.fluid
                       for i in range(9)]
        self.step_count = 0
        self.force = tuple(float(g) for g in config.body_force)

    def _forcing(self, ux, uy):
        gx, gy = self.force
        if gx == 0 and gy == 0:
            return 0.0
        # Guo forcing term
        cx, cy = C[:, 0, None, None], C[:, 1, None, None]
        cu = cx * ux + cy * uy
        term = ((cx - ux) * 3 + 9 * cu * cx) * gx + ((cy - uy) * 3 + 9 * cu * cy) * gy
        return (1 - 0.5 / self.cfg.tau) * W[:, None, None] * term

    def step(self) -> None:
        f, tau = self.f, self.cfg.tau
        rho, ux, uy = macroscopic(f, self.force)
        post = f - (f - equilibrium(rho, ux, uy)) / tau + self._forcing(ux, uy)
        post[:, self.solid] = f[:, self.solid]
        new = np.empty_like(f)
        for i in range(9):
            new[i] = np.roll(post[i], (C[i, 1], C[i, 0]), axis=(0, 1))
            b = self.bounce[i]
            new[i][b] = post[OPP[i]][b]
        if self.cfg.boundary == "channel":
            self._open_boundaries(new)
        self.f = new
        self.step_count += 1

    def _open_boundaries(self, f) -> None:
        """Non-equilibrium extrapolation on the open columns.

        Inlet: equilibrium at the inflow velocity with the neighbour density.
        Outlet: zero-gradient velocity at reference density 1 (pins the
        pressure level).  Both add the neighbour's non-equilibrium part.
        """
        ux_in, uy_in = self.cfg.inflow
        for col, nb in ((0, 1), (-1, -2)):
            rows = self.fluid[:, col] & self.fluid[:, nb]
            fn = f[:, rows, nb][:, :, None]
            rho, ux, uy = macroscopic(fn, self.force)
            neq = fn - equilibrium(rho, ux, uy)
            if col == 0:
                ux, uy = np.full_like(ux, ux_in), np.full_like(uy, uy_in)
            else:
                rho = np.ones_like(rho)
            f[:, rows, col] = (equilibrium(rho, ux, uy) + neq)[:, :, 0]

    def fields(self) -> dict:
        rho, ux, uy = macroscopic(self.f, self.force)
        ux, uy = np.where(self.solid, 0.0, ux), np.where(self.solid, 0.0, uy)
        rho = np.where(self.solid, 0.0, rho)
        return {"rho": rho, "ux": ux, "uy": uy, "speed": np.hypot(ux, uy)}

    def check(self) -> None:
        d = self.fields()
        speed = float(np.max(d["speed"])) if np.all(np.isfinite(self.f)) else np.inf
        if not speed < self.cfg.max_speed:
            raise LbmInstabilityError(self.step_count, speed)

    def mass(self) -> float:
        return float(self.f[:, self.fluid].sum())


def lbm_simulate(config: LbmConfig) -> dict:
    """Run warmup steps, then record ``n_frames`` frames every ``stride``
    steps. Returns a dict with one ``(n_frames, ny, nx)`` array per
    requested output and the solid ``mask``."""
    solver = LbmSolver(config)
    for _ in range(config.warmup):
        solver.step()
        if solver.step_count % 200 == 0:
            solver.check()
    frames = {k: np.empty((config.n_frames, config.ny, config.nx)) for k in config.outputs}
    for j in range(config.n_frames):
        if j > 0:
            for _ in range(config.stride):
                solver.step()
        solver.check()
        d = solver.fields()
        for k in config.outputs:
            frames[k][j] = d[k]
    frames["mask"] = solver.solid.copy()
    return frames
