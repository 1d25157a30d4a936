"""Six-parameter CST airfoils and their rasterisation onto a lattice."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

N1, N2 = 0.5, 1.0


@dataclass(frozen=True)
class CstParams:
    A_u0: float = 0.45
    A_u1: float = 0.08
    A_l0: float = -0.15
    A_l1: float = -0.02
    t_e: float = 0.002
    theta_cw: float = 0.0  # degrees

    def as_code(self) -> np.ndarray:
        return np.array([self.A_u0, self.A_u1, self.A_l0, self.A_l1, self.t_e, self.theta_cw])

    @classmethod
    def from_code(cls, code) -> "CstParams":
        return cls(*(float(c) for c in code))


def class_function(x):
    x = np.asarray(x, dtype=float)
    return x ** N1 * (1 - x) ** N2


def surfaces(p: CstParams, x):
    """Upper and lower surface heights at chord positions ``x``."""
    x = np.asarray(x, dtype=float)
    C = class_function(x)
    S_u = p.A_u0 * (1 - x) + p.A_u1 * x
    S_l = p.A_l0 * (1 - x) + p.A_l1 * x
    return C * S_u + 0.5 * p.t_e * x, C * S_l - 0.5 * p.t_e * x


def rotate_cw(pts, theta_deg: float, center=(0.5, 0.0)):
    th = np.deg2rad(theta_deg)
    c, s = np.cos(th), np.sin(th)
    d = np.asarray(pts, dtype=float) - center
    # clockwise rotation in the (x, z) plane
    return np.column_stack([c * d[:, 0] + s * d[:, 1], -s * d[:, 0] + c * d[:, 1]]) + center


def airfoil_curve(p: CstParams, samples: int = 101) -> np.ndarray:
    """Closed polyline (TE -> upper -> LE -> lower -> TE), in chord units."""
    if p.t_e < 0:
        raise ValueError("trailing-edge thickness must be non-negative")
    beta = np.linspace(0.0, np.pi, samples)
    x = 0.5 * (1 - np.cos(beta))
    zu, zl = surfaces(p, x)
    inner = slice(1, -1)
    if np.any(zu[inner] <= zl[inner]):
        raise ValueError("CST parameters give a self-intersecting airfoil")
    upper = np.column_stack([x[::-1], zu[::-1]])
    lower = np.column_stack([x[1:], zl[1:]])
    pts = np.vstack([upper, lower])
    return rotate_cw(pts, p.theta_cw)


def points_in_polygon(px, py, poly) -> np.ndarray:
    """Even-odd crossing test for many points against one closed polygon."""
    px, py = np.asarray(px, float), np.asarray(py, float)
    inside = np.zeros(np.broadcast(px, py).shape, dtype=bool)
    x0, y0 = poly[:, 0], poly[:, 1]
    x1, y1 = np.roll(x0, -1), np.roll(y0, -1)
    for a, b, c, d in zip(x0, y0, x1, y1):
        if b == d:
            continue
        crosses = (b > py) != (d > py)
        xint = a + (py - b) * (c - a) / (d - b)
        inside ^= crosses & (px < xint)
    return inside


def cst_airfoil(p: CstParams, samples: int, nx: int, ny: int,
                chord: float | None = None, leading_edge: tuple | None = None):
    """Boundary polyline in lattice coordinates and the solid-cell mask.

    The chord spans ``chord`` lattice units (default ``nx / 4``) with the
    unrotated leading edge at ``leading_edge`` (default ``(nx / 4, ny / 2)``).
    """
    chord = nx / 4 if chord is None else chord
    le = (nx / 4, ny / 2) if leading_edge is None else leading_edge
    curve = airfoil_curve(p, samples)
    poly = np.column_stack([le[0] + chord * curve[:, 0], le[1] + chord * curve[:, 1]])
    y, x = np.mgrid[:ny, :nx]
    mask = points_in_polygon(x, y, poly)
    return poly, mask
