"""Neural-field modes and spectra, projection, rollout and losses.

A state vector stacks the field channels of one snapshot channel-major:
``[u_c0(x_0..x_N-1), u_c1(x_0..x_N-1), ...]``.  A mode bank is a complex
``(S, r)`` matrix over those ``S = C * N`` entries.  With conjugate pairing
(the default) the bank holds ``P`` learned columns followed by their
elementwise conjugates, so ``r = 2P``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .. import numerics
from ..autodiff import (CDTYPE, DTYPE, DivergenceError, NetworkSpec, ParamSet, apply_mlp,
                        init_params, lstsq)

EXP_LIMIT = 700.0  # exp overflows float64 just above 709


@dataclass
class Normalizer:
    """Affine maps of coordinates onto ``[-1, 1]`` and of codes onto
    ``[-code_scale, code_scale]``.

    ``dt`` is the time unit of the spectrum networks: they emit ``omega * dt``
    so rates are in radians (or e-folds) per frame.
    """

    x_lo: np.ndarray
    x_hi: np.ndarray
    code_lo: np.ndarray
    code_hi: np.ndarray
    dt: float
    code_scale: float = 1.0

    @staticmethod
    def _scale(v, lo, hi):
        span = np.where(hi > lo, hi - lo, 1.0)
        mid = np.where(hi > lo, lo, lo - 0.5)
        return 2.0 * (np.asarray(v, dtype=np.float64) - mid) / span - 1.0

    def points(self, x) -> np.ndarray:
        return self._scale(x, self.x_lo, self.x_hi)

    def code(self, xi) -> np.ndarray:
        return self.code_scale * self._scale(np.atleast_1d(xi), self.code_lo, self.code_hi)

    def inputs(self, x, xi) -> torch.Tensor:
        """Network inputs ``[x_norm, xi_norm]`` for every point."""
        xn = self.points(np.atleast_2d(x))
        cn = np.broadcast_to(self.code(xi), (xn.shape[0], len(self.code_lo)))
        return torch.from_numpy(np.hstack([xn, cn]))

    def to_dict(self) -> dict:
        return {"x_lo": self.x_lo.tolist(), "x_hi": self.x_hi.tolist(),
                "code_lo": self.code_lo.tolist(), "code_hi": self.code_hi.tolist(), "dt": self.dt,
                "code_scale": self.code_scale}

    @classmethod
    def from_dict(cls, d: dict) -> "Normalizer":
        a = lambda k: np.asarray(d[k], dtype=np.float64)
        return cls(a("x_lo"), a("x_hi"), a("code_lo"), a("code_hi"), float(d["dt"]),
                   float(d.get("code_scale", 1.0)))


class ModePairNets:
    """One stage: a sine network for the mode(s) and an ELU network for the
    spectrum.

    With ``conjugate=True`` the stage yields one complex mode whose conjugate
    is implied; otherwise it yields ``modes_per_stage`` independent complex
    modes with independent eigenvalues.
    """

    def __init__(self, phi_spec: NetworkSpec, lam_spec: NetworkSpec,
                 phi_params: ParamSet, lam_params: ParamSet, n_channels: int,
                 conjugate: bool = True, frozen: bool = False):
        self.n_modes = phi_spec.output_dim // (2 * n_channels)
        if phi_spec.output_dim != 2 * n_channels * self.n_modes or lam_spec.output_dim != 2 * self.n_modes:
            raise ValueError("network output widths do not match channels/modes")
        if conjugate and self.n_modes != 1:
            raise ValueError("a conjugate-paired stage carries exactly one mode")
        self.phi_spec, self.lam_spec = phi_spec, lam_spec
        self.phi, self.lam = phi_params, lam_params
        self.n_channels = n_channels
        self.conjugate = conjugate
        self.frozen = frozen

    @classmethod
    def create(cls, input_dim: int, code_dim: int, n_channels: int, generator: torch.Generator,
               phi_width=64, phi_layers=3, lam_width=64, lam_layers=3, omega0=30.0,
               conjugate=True, lambda_init_scale=0.01) -> "ModePairNets":
        k = 1 if conjugate else 2
        phi_spec = NetworkSpec(input_dim + code_dim, phi_width, phi_layers, 2 * n_channels * k,
                               "sine", omega0)
        lam_spec = NetworkSpec(code_dim, lam_width, lam_layers, 2 * k, "elu")
        phi = init_params(phi_spec, generator)
        lam = init_params(lam_spec, generator)
        with torch.no_grad():
            lam.tensors[-2].mul_(lambda_init_scale)
        return cls(phi_spec, lam_spec, phi, lam, n_channels, conjugate)

    def parameters(self) -> list[torch.Tensor]:
        return list(self.phi) + list(self.lam)

    @property
    def n_params(self) -> int:
        return self.phi.count + self.lam.count

    def raw_modes(self, inputs: torch.Tensor) -> torch.Tensor:
        """Undeflated complex columns, shape ``(C * N, n_modes)``."""
        out = apply_mlp(self.phi_spec, self.phi.tensors, inputs)
        n, c = inputs.shape[0], self.n_channels
        out = out.reshape(n, self.n_modes, 2, c)
        cols = torch.complex(out[:, :, 0, :], out[:, :, 1, :])  # (N, k, C)
        return cols.permute(2, 0, 1).reshape(c * n, self.n_modes)

    def omega_scaled(self, code_in: torch.Tensor) -> torch.Tensor:
        """Per-frame ``omega * dt`` for each mode of the stage."""
        out = apply_mlp(self.lam_spec, self.lam.tensors, code_in.reshape(1, -1))[0]
        return torch.complex(out[0::2], out[1::2])


def _orth_basis(cols: torch.Tensor) -> torch.Tensor:
    """Orthonormal basis of the column span (gradient-stopped)."""
    A = cols.detach().numpy()
    svd = numerics.svd_truncated(A, A.shape[1])
    s = svd.singular_values
    keep = s > numerics.RANK_TOL * max(s[0], np.finfo(float).tiny)
    return torch.from_numpy(np.ascontiguousarray(svd.U[:, keep]))


def deflate(candidate: torch.Tensor, frozen: torch.Tensor | None) -> torch.Tensor:
    """Remove from ``candidate`` its projection onto the span of ``frozen``.

    The projector is built from ``frozen`` under stop-gradient, so gradients
    reach only ``candidate``.  The projection is applied twice, which makes
    the result orthogonal to working precision even when most of the
    candidate lies inside the span.
    """
    if frozen is None or frozen.shape[1] == 0:
        return candidate
    Q = _orth_basis(frozen)
    out = candidate
    for _ in range(2):
        out = out - Q @ (Q.conj().T @ out)
    return out


def with_conjugates(cols: torch.Tensor) -> torch.Tensor:
    return torch.cat([cols, cols.conj()], dim=1)


def eval_basis(stages: list[ModePairNets], inputs: torch.Tensor, deflation: bool = True,
               cache: list | None = None) -> torch.Tensor:
    """Assemble the bank ``Phi`` over all stages at the given inputs.

    Conjugate-paired stages contribute their column first and the conjugate
    block is appended at the end, so column ``p + P`` is ``conj(column p)``.
    Frozen stages are evaluated without gradient.  ``cache`` may hold
    precomputed (already deflated, detached) primary columns for a leading
    run of frozen stages.
    """
    if not stages:
        raise ValueError("at least one stage is required")
    conj = stages[0].conjugate
    primary: list[torch.Tensor] = []
    span: list[torch.Tensor] = []
    for idx, st in enumerate(stages):
        if cache is not None and idx < len(cache):
            col = cache[idx]
        else:
            if st.frozen:
                with torch.no_grad():
                    col = st.raw_modes(inputs)
            else:
                col = st.raw_modes(inputs)
            if deflation and span:
                col = deflate(col, torch.cat(span, dim=1))
            if st.frozen:
                col = col.detach()
        primary.append(col)
        span.append(with_conjugates(col) if conj else col)
    P = torch.cat(primary, dim=1)
    return with_conjugates(P) if conj else P


def primary_columns(bank: torch.Tensor, stages: list[ModePairNets]) -> torch.Tensor:
    """The learned (non-conjugate) columns of a bank."""
    n = sum(st.n_modes for st in stages)
    return bank[:, :n]


def eval_spectrum(stages: list[ModePairNets], code_in: torch.Tensor, dt: float) -> torch.Tensor:
    """Continuous eigenvalues in bank column order (conjugates appended)."""
    parts = []
    for st in stages:
        if st.frozen:
            with torch.no_grad():
                parts.append(st.omega_scaled(code_in))
        else:
            parts.append(st.omega_scaled(code_in))
    w = torch.cat(parts) / dt
    if not torch.isfinite(w).all():
        raise FloatingPointError("non-finite spectrum output")
    return with_conjugates(w.reshape(1, -1))[0] if stages[0].conjugate else w


def _as_tensor(u) -> torch.Tensor:
    return u if torch.is_tensor(u) else torch.as_tensor(np.asarray(u, dtype=np.float64))


def project(bank: torch.Tensor, u, context: str = "projection") -> torch.Tensor:
    """Least-squares modal coefficients of ``u`` (state vector or
    ``(S, k)`` block of state columns)."""
    return lstsq(bank, _as_tensor(u), context)


def check_growth(omega: torch.Tensor, delta) -> None:
    d = _as_tensor(delta).to(DTYPE).reshape(-1)
    worst = (omega.real.detach()[None, :] * d[:, None]).max(dim=0).values
    bad = torch.nonzero(worst > EXP_LIMIT)
    if len(bad):
        j = int(bad[0, 0])
        raise DivergenceError(
            f"mode {j}: Re(omega) * delta = {float(worst[j]):.4g} overflows the exponential")


def propagate(bank: torch.Tensor, omega: torch.Tensor, z: torch.Tensor, delta) -> torch.Tensor:
    """Complex states ``Phi diag(exp(omega delta)) z``.

    ``delta`` is a scalar or a 1-D tensor of elapsed times; in the latter
    case the result has shape ``(S, len(delta))``.
    """
    check_growth(omega, delta)
    d = _as_tensor(delta).to(DTYPE)
    if d.dim() == 0:
        return bank @ (torch.exp(omega * d) * z)
    E = torch.exp(omega[:, None] * d[None, :].to(CDTYPE))  # (r, T)
    return bank @ (E * z[:, None])


def rollout(bank, omega, z, delta, return_residual: bool = False):
    """Real forecast ``Re(Phi exp(omega delta) z)``; optionally also the
    largest imaginary part discarded."""
    full = propagate(bank, omega, z, delta)
    if return_residual:
        return full.real, float(full.imag.abs().max()) if full.numel() else 0.0
    return full.real


def _mean_sq(pred: torch.Tensor, truth: torch.Tensor) -> torch.Tensor:
    return torch.mean((pred - truth) ** 2)


def loss_short(bank, omega, traj, dt: float, teacher_forcing: bool = True) -> torch.Tensor:
    """Mean squared one-step error; ``traj`` has shape ``(T, S)``.

    With teacher forcing every step starts from the projected data frame;
    otherwise the previous prediction is re-projected.
    """
    U = _as_tensor(traj)
    if U.shape[0] < 2:
        raise ValueError("need at least two snapshots")
    lam = torch.exp(omega * dt)
    check_growth(omega, dt)
    if teacher_forcing:
        Z = project(bank, U[:-1].T, "one-step projection")
        pred = (bank @ (lam[:, None] * Z)).real
        return _mean_sq(pred, U[1:].T)
    preds, cur = [], U[0]
    for _ in range(U.shape[0] - 1):
        cur = (bank @ (lam * project(bank, cur, "one-step projection"))).real
        preds.append(cur)
    return _mean_sq(torch.stack(preds, dim=1), U[1:].T)


def loss_long(bank, omega, traj, dt: float, horizons=None) -> torch.Tensor:
    """Mean squared error of rollouts from the projected first frame.

    ``horizons`` selects frame offsets ``j >= 1`` (default: all).
    """
    U = _as_tensor(traj)
    if U.shape[0] < 2:
        raise ValueError("need at least two snapshots")
    j = torch.arange(1, U.shape[0]) if horizons is None else torch.as_tensor(horizons)
    z0 = project(bank, U[0], "initial projection")
    pred = rollout(bank, omega, z0, j.to(DTYPE) * dt)
    return _mean_sq(pred, U[j].T)


def mixed_loss(alpha: float, beta: float, bank, omega, traj, dt: float,
               horizons=None, teacher_forcing: bool = True) -> torch.Tensor:
    """``alpha * L_short + beta * L_long``; a zero weight skips its term."""
    if alpha < 0 or beta < 0 or alpha + beta <= 0:
        raise ValueError("loss weights must be non-negative with a positive sum")
    total = None
    if alpha:
        total = alpha * loss_short(bank, omega, traj, dt, teacher_forcing)
    if beta:
        lg = beta * loss_long(bank, omega, traj, dt, horizons)
        total = lg if total is None else total + lg
    return total


def mode_correlation(cols) -> float:
    """Mean of ``|<phi_i, phi_j>| / (|phi_i| |phi_j|)`` over pairs ``i < j``."""
    A = cols.detach().numpy() if torch.is_tensor(cols) else np.asarray(cols)
    if A.shape[1] < 2:
        return 0.0
    A = A / np.linalg.norm(A, axis=0)
    G = np.abs(A.conj().T @ A)
    iu = np.triu_indices(A.shape[1], 1)
    return float(G[iu].mean())


def cross_gram_penalty(cols: torch.Tensor) -> torch.Tensor:
    """Sum of squared normalised cross inner products between columns."""
    n = cols / torch.linalg.vector_norm(cols, dim=0)
    G = n.conj().T @ n
    off = G - torch.diag(torch.diagonal(G))
    return (off.abs() ** 2).sum() / 2
