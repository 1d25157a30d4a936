"""CSV exports of learned modes, spectra and sweep results."""
from __future__ import annotations

import csv
import os

import numpy as np

from ..inr_dmd.training import InrDmdModel


def _fmt(v: float) -> str:
    return repr(float(v))


def mode_header(model: InrDmdModel, coord_names, channels) -> list[str]:
    n = sum(st.n_modes for st in model.stages)
    head = list(coord_names)
    for p in range(1, n + 1):
        for ch in channels:
            suffix = f"_{ch}" if len(channels) > 1 else ""
            head += [f"re_phi{p}{suffix}", f"im_phi{p}{suffix}"]
    return head


def export_modes(model: InrDmdModel, points, code, out, coord_names=None, channels=None) -> list[str]:
    """Write one row per sample point: coordinates then Re/Im of every
    learned mode (conjugates omitted)."""
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    coord_names = coord_names or [f"x{i}" for i in range(points.shape[1])]
    channels = channels or [f"c{i}" for i in range(model.n_channels)]
    modes = model.primary_modes(points, code)  # (C * N, n)
    N, C = points.shape[0], model.n_channels
    per_point = modes.reshape(C, N, -1)  # channel-major state layout
    head = mode_header(model, coord_names, channels)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(head)
        for i in range(N):
            row = [_fmt(v) for v in points[i]]
            for p in range(modes.shape[1]):
                for c in range(C):
                    z = per_point[c, i, p]
                    row += [_fmt(z.real), _fmt(z.imag)]
            w.writerow(row)
    return head


def export_spectrum(model: InrDmdModel, codes, out) -> None:
    """One row per code: code entries then ``alpha_p, beta_p`` per mode."""
    codes = np.atleast_2d(np.asarray(codes, dtype=np.float64))
    n = sum(st.n_modes for st in model.stages)
    head = [f"xi{j}" for j in range(codes.shape[1])]
    for p in range(1, n + 1):
        head += [f"alpha{p}", f"beta{p}"]
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(head)
        for xi in codes:
            om = model.spectrum(xi)[:n]
            row = [_fmt(v) for v in xi]
            for o in om:
                row += [_fmt(o.real), _fmt(o.imag)]
            w.writerow(row)


def read_modes_csv(path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=np.float64)


def write_rows(path, header, rows) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in r])
