"""Stage-wise training with deflation, ablation switches and the fitted model."""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np
import torch

from .. import numerics
from ..autodiff import DivergenceError, NetworkSpec, OptimState, ParamSet, adam_step, cosine_lr
from ..data import TrajectorySet
from .core import (ModePairNets, Normalizer, cross_gram_penalty, eval_basis, eval_spectrum,
                   mixed_loss, mode_correlation, primary_columns)

log = logging.getLogger(__name__)

ABLATIONS = ("none", "no-deflation", "no-conj", "no-long", "penalty-orth")


@dataclass
class TrainConfig:
    """Training settings.

    ``epochs`` counts passes over the training samples per stage.  A sample
    is a window of ``window`` consecutive frames of one trajectory (the whole
    trajectory when ``window`` is None).  ``long_stride`` subsamples the
    long-horizon offsets (None: every offset).
    """

    n_pairs: int = 2
    alpha: float = 0.9
    beta: float = 0.1
    epochs: int = 500
    batch_size: int = 16
    window: int | None = None
    phi_width: int = 64
    phi_layers: int = 3
    lam_width: int = 64
    lam_layers: int = 3
    omega0: float = 30.0
    lr_phi: float = 1e-4
    lr_lambda: float = 1e-3
    min_lr: float = 1e-6
    weight_decay: float = 1e-6
    adam_beta1: float = 0.9
    adam_beta2: float = 0.99
    adam_eps: float = 1e-15
    seed: int = 0
    ablation: str = "none"
    penalty_weight: float = 1.0
    long_stride: int | None = None
    teacher_forcing: bool = True
    lambda_init_scale: float = 0.01
    code_scale: float = 0.1

    def __post_init__(self):
        if self.n_pairs < 1:
            raise ValueError("need at least one mode pair")
        if self.alpha < 0 or self.beta < 0 or self.alpha + self.beta <= 0:
            raise ValueError("loss weights must be non-negative with a positive sum")
        if self.ablation not in ABLATIONS:
            raise ValueError(f"unknown ablation {self.ablation!r}; choose from {ABLATIONS}")
        if self.window is not None and self.window < 2:
            raise ValueError("window must hold at least two frames")

    @property
    def deflation(self) -> bool:
        return self.ablation not in ("no-deflation", "penalty-orth")

    @property
    def conjugate(self) -> bool:
        return self.ablation != "no-conj"

    @property
    def effective_beta(self) -> float:
        return 0.0 if self.ablation == "no-long" else self.beta

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


class InrDmdModel:
    """Trained stages plus the normalisation needed to evaluate them."""

    def __init__(self, stages: list[ModePairNets], normalizer: Normalizer, n_channels: int,
                 deflation: bool = True):
        self.stages = stages
        self.normalizer = normalizer
        self.n_channels = n_channels
        self.deflation = deflation

    @property
    def conjugate(self) -> bool:
        return self.stages[0].conjugate

    @property
    def n_params(self) -> int:
        return sum(st.n_params for st in self.stages)

    @property
    def rank(self) -> int:
        n = sum(st.n_modes for st in self.stages)
        return 2 * n if self.conjugate else n

    def inputs(self, points, code) -> torch.Tensor:
        return self.normalizer.inputs(points, code)

    def code_input(self, code) -> torch.Tensor:
        return torch.from_numpy(self.normalizer.code(code))

    def bank_tensor(self, points, code) -> torch.Tensor:
        return eval_basis(self.stages, self.inputs(points, code), self.deflation)

    def bank(self, points, code) -> np.ndarray:
        with torch.no_grad():
            return self.bank_tensor(points, code).numpy()

    def spectrum(self, code) -> np.ndarray:
        with torch.no_grad():
            return eval_spectrum(self.stages, self.code_input(code), self.normalizer.dt).numpy()

    def forecast(self, points, code, u0, times, bank=None, omega=None) -> np.ndarray:
        """Real states at elapsed ``times`` from the state ``u0``; shape
        ``(len(times), S)``.  Precomputed ``bank``/``omega`` may be passed."""
        bank = self.bank(points, code) if bank is None else bank
        omega = self.spectrum(code) if omega is None else omega
        return forecast_np(bank, omega, u0, times)

    def primary_modes(self, points, code) -> np.ndarray:
        B = self.bank(points, code)
        return B[:, :sum(st.n_modes for st in self.stages)]


def forecast_np(bank: np.ndarray, omega: np.ndarray, u0, times) -> np.ndarray:
    """Project ``u0`` once and evolve with one exponential per frame.

    The real part is formed from two real matrix products, which avoids
    materialising the complex states.
    """
    z = numerics.least_squares_solve(bank, np.asarray(u0, dtype=np.complex128), "forecast projection")
    t = np.asarray(times, dtype=np.float64)
    growth = np.max(np.real(omega)[None, :] * t[:, None], axis=0) if t.size else np.zeros(0)
    if np.any(growth > 700):
        j = int(np.argmax(growth))
        raise DivergenceError(f"mode {j}: Re(omega) * t = {growth[j]:.4g} overflows the exponential")
    W = np.exp(np.outer(t, omega)) * z
    return W.real @ bank.real.T - W.imag @ bank.imag.T


@dataclass
class Checkpoint:
    config: TrainConfig
    model: InrDmdModel
    history: list = field(default_factory=list)  # per stage: list of epoch losses
    meta: dict = field(default_factory=dict)


# --- data preparation ----------------------------------------------------------

@dataclass
class _Traj:
    idx: int
    points: np.ndarray
    code: np.ndarray
    inputs: torch.Tensor
    code_in: torch.Tensor
    U: torch.Tensor  # (T, S)


def make_normalizer(ts: TrajectorySet, train_idx, code_scale: float = 1.0) -> Normalizer:
    pts = ts.grid.points()
    codes = ts.codes[list(train_idx)]
    return Normalizer(pts.min(axis=0), pts.max(axis=0), codes.min(axis=0), codes.max(axis=0),
                      ts.dt, code_scale)


def prepare(ts: TrajectorySet, idx, normalizer: Normalizer) -> list[_Traj]:
    pts_all = ts.grid.points()
    out = []
    for i in idx:
        pts = pts_all[ts.fluid(i)]
        U = ts.flat(i).reshape(ts.n_time, -1)
        out.append(_Traj(i, pts, ts.codes[i], normalizer.inputs(pts, ts.codes[i]),
                         torch.from_numpy(normalizer.code(ts.codes[i])), torch.from_numpy(U)))
    return out


def _samples(trajs: list[_Traj], window: int | None) -> list[tuple[int, int]]:
    out = []
    for k, tr in enumerate(trajs):
        T = tr.U.shape[0]
        if window is None or window >= T:
            out.append((k, 0))
        else:
            out += [(k, s) for s in range(0, T - window + 1)]
    return out


def _horizons(n: int, stride: int | None):
    if stride is None or stride <= 1:
        return None
    j = list(range(1, n, stride))
    if j[-1] != n - 1:
        j.append(n - 1)
    return j


# --- training --------------------------------------------------------------------

def _new_stage(p: int, cfg: TrainConfig, d: int, m: int, c: int) -> ModePairNets:
    gen = torch.Generator().manual_seed(cfg.seed * 10007 + p)
    return ModePairNets.create(d, m, c, gen, cfg.phi_width, cfg.phi_layers, cfg.lam_width,
                               cfg.lam_layers, cfg.omega0, cfg.conjugate, cfg.lambda_init_scale)


def _optimizers(cfg: TrainConfig, epochs: int) -> tuple[OptimState, OptimState]:
    mk = lambda lr: OptimState(base_lr=lr, beta1=cfg.adam_beta1, beta2=cfg.adam_beta2,
                               eps=cfg.adam_eps, weight_decay=cfg.weight_decay,
                               min_lr=min(cfg.min_lr, lr), total_epochs=epochs)
    return mk(cfg.lr_phi), mk(cfg.lr_lambda)


def _batch_loss(stages, trajs, batch, cfg: TrainConfig, dt: float, caches, deflation: bool):
    by_traj: dict[int, list[int]] = {}
    for k, s in batch:
        by_traj.setdefault(k, []).append(s)
    total = 0.0
    beta = cfg.effective_beta
    for k, starts in by_traj.items():
        tr = trajs[k]
        bank = eval_basis(stages, tr.inputs, deflation, caches[k] if caches else None)
        omega = eval_spectrum(stages, tr.code_in, dt)
        for s in starts:
            U = tr.U if cfg.window is None else tr.U[s:s + cfg.window]
            total = total + mixed_loss(cfg.alpha, beta, bank, omega, U, 1.0 * dt,
                                       _horizons(U.shape[0], cfg.long_stride), cfg.teacher_forcing)
        if cfg.ablation == "penalty-orth" and len(stages) > 1:
            total = total + cfg.penalty_weight * len(starts) * cross_gram_penalty(
                primary_columns(bank, stages))
    return total / len(batch)


def _run(stages, trainable: list[ModePairNets], trajs, cfg: TrainConfig, dt: float, epochs: int,
         caches, deflation: bool, label: str) -> list[float]:
    phi_params = ParamSet([t for st in trainable for t in st.phi])
    lam_params = ParamSet([t for st in trainable for t in st.lam])
    phi_params.requires_grad_(True)
    lam_params.requires_grad_(True)
    opt_phi, opt_lam = _optimizers(cfg, epochs)
    samples = _samples(trajs, cfg.window)
    rng = np.random.default_rng(cfg.seed * 7919 + len(stages))
    curve = []
    for epoch in range(epochs):
        opt_phi.lr = cosine_lr(opt_phi.base_lr, opt_phi.min_lr, epoch, epochs)
        opt_lam.lr = cosine_lr(opt_lam.base_lr, opt_lam.min_lr, epoch, epochs)
        order = rng.permutation(len(samples))
        losses = []
        for b0 in range(0, len(order), cfg.batch_size):
            batch = [samples[i] for i in order[b0:b0 + cfg.batch_size]]
            try:
                loss = _batch_loss(stages, trajs, batch, cfg, dt, caches, deflation)
            except (DivergenceError, OverflowError, numerics.IllConditionedBasisError) as exc:
                raise DivergenceError(f"{label}, epoch {epoch}: {exc}") from exc
            if not torch.isfinite(loss):
                raise DivergenceError(f"{label}, epoch {epoch}: non-finite loss")
            grads = torch.autograd.grad(loss, list(phi_params) + list(lam_params), allow_unused=True)
            grads = [torch.zeros_like(p) if g is None else g for p, g in
                     zip(list(phi_params) + list(lam_params), grads)]
            n = len(phi_params)
            adam_step(phi_params, grads[:n], opt_phi)
            adam_step(lam_params, grads[n:], opt_lam)
            losses.append(loss.item())
        curve.append(float(np.mean(losses)))
        if epoch % 50 == 0 or epoch == epochs - 1:
            log.info("%s epoch %d loss %.4e", label, epoch, curve[-1])
    phi_params.requires_grad_(False)
    lam_params.requires_grad_(False)
    return curve


def _frozen_cache(stages, trajs, deflation: bool) -> list[list[torch.Tensor]]:
    caches = []
    with torch.no_grad():
        for tr in trajs:
            bank = eval_basis(stages, tr.inputs, deflation)
            cols, off = [], 0
            for st in stages:
                cols.append(bank[:, off:off + st.n_modes])
                off += st.n_modes
            caches.append(cols)
    return caches


def train_stage(stages: list[ModePairNets], p: int, trajs: list[_Traj], cfg: TrainConfig,
                dt: float) -> tuple[list[ModePairNets], list[float]]:
    """Train a fresh stage ``p`` (1-based) on top of the frozen ``stages``."""
    if len(stages) != p - 1 or not all(st.frozen for st in stages):
        raise ValueError("stages before p must exist and be frozen")
    tr0 = trajs[0]
    d = tr0.points.shape[1]
    m = tr0.code_in.numel()
    c = tr0.U.shape[1] // tr0.points.shape[0]
    new = _new_stage(p, cfg, d, m, c)
    caches = _frozen_cache(stages, trajs, True) if stages else None
    all_stages = stages + [new]
    curve = _run(all_stages, [new], trajs, cfg, dt, cfg.epochs, caches, True, f"stage {p}")
    new.frozen = True
    _warn_collisions(all_stages, trajs, dt)
    return all_stages, curve


def _warn_collisions(stages: list[ModePairNets], trajs: list[_Traj], dt: float, tol: float = 1e-8):
    """Log when the newest stage's eigenvalues coincide with earlier ones."""
    k = stages[-1].n_modes
    for tr in trajs:
        with torch.no_grad():
            w = eval_spectrum(stages, tr.code_in, dt).numpy()
        n = sum(st.n_modes for st in stages)
        w = w[:n]
        d = np.abs(w[n - k:, None] - w[None, :n - k])
        if d.size and d.min() < tol * max(1.0, np.abs(w).max()):
            log.warning("stage %d: eigenvalue within %.1e of an earlier stage for trajectory %d",
                        len(stages), tol, tr.idx)


def train_all(ts: TrajectorySet, cfg: TrainConfig, train_idx=None) -> Checkpoint:
    """Fit the model on the training split of ``ts``.

    The default pipeline trains ``cfg.n_pairs`` stages one after another.
    The ``no-deflation`` and ``penalty-orth`` ablations train all stages
    jointly for ``cfg.epochs`` epochs, so every network sees the same number
    of updates as a deflated stage.
    """
    idx = ts.indices("train") if train_idx is None else list(train_idx)
    if not idx:
        raise ValueError("no training trajectories")
    torch.set_num_threads(1)
    norm = make_normalizer(ts, idx, cfg.code_scale)
    trajs = prepare(ts, idx, norm)
    dt = ts.dt
    history = []
    if cfg.deflation:
        stages: list[ModePairNets] = []
        for p in range(1, cfg.n_pairs + 1):
            stages, curve = train_stage(stages, p, trajs, cfg, dt)
            history.append(curve)
    else:
        d, m = trajs[0].points.shape[1], trajs[0].code_in.numel()
        c = ts.n_channels
        stages = [_new_stage(p, cfg, d, m, c) for p in range(1, cfg.n_pairs + 1)]
        history.append(_run(stages, stages, trajs, cfg, dt, cfg.epochs, None,
                            False, "joint"))
        for st in stages:
            st.frozen = True
    model = InrDmdModel(stages, norm, ts.n_channels, cfg.deflation)
    meta = {"train_idx": idx, "channels": list(ts.channels), "grid": ts.grid.to_dict(),
            "benchmark": ts.meta.get("benchmark", "")}
    return Checkpoint(cfg, model, history, meta)


def training_correlation(ckpt: Checkpoint, ts: TrajectorySet, idx=None) -> float:
    """Mean inter-mode correlation of the learned columns over trajectories."""
    idx = ckpt.meta.get("train_idx", ts.indices("train")) if idx is None else idx
    pts = ts.grid.points()
    vals = [mode_correlation(ckpt.model.primary_modes(pts[ts.fluid(i)], ts.codes[i])) for i in idx]
    return float(np.mean(vals))
