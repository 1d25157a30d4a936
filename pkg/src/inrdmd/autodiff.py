"""Small MLPs, reverse-mode gradients, Adam and the cosine schedule.

Differentiation is delegated to ``torch.autograd`` on CPU in float64.  A
:class:`Tape` wraps one forward graph so it can be consumed exactly once,
and :func:`lstsq` supplies a least-squares solve whose backward pass is
derived from the normal equations instead of an explicit pseudoinverse.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import torch

from . import numerics

DTYPE = torch.float64
CDTYPE = torch.complex128


class TapeConsumedError(RuntimeError):
    pass


class DivergenceError(FloatingPointError):
    pass


@dataclass(frozen=True)
class NetworkSpec:
    """Fully connected network layout.

    ``hidden_layers`` counts hidden layers of width ``hidden_width``; the
    output layer is affine.  Sine networks compute ``sin(omega0 * (W x + b))``
    in every hidden layer.
    """

    input_dim: int
    hidden_width: int
    hidden_layers: int
    output_dim: int
    activation: str = "sine"
    omega0: float = 30.0

    def __post_init__(self):
        if min(self.input_dim, self.hidden_width, self.hidden_layers, self.output_dim) < 1:
            raise ValueError(f"non-positive layer size in {self}")
        if self.activation not in ("sine", "elu"):
            raise ValueError(f"unknown activation {self.activation!r}")

    def layer_dims(self) -> list[tuple[int, int]]:
        dims = [self.input_dim] + [self.hidden_width] * self.hidden_layers + [self.output_dim]
        return list(zip(dims[:-1], dims[1:]))

    @property
    def n_params(self) -> int:
        return sum(i * o + o for i, o in self.layer_dims())

    def to_dict(self) -> dict:
        return dict(input_dim=self.input_dim, hidden_width=self.hidden_width,
                    hidden_layers=self.hidden_layers, output_dim=self.output_dim,
                    activation=self.activation, omega0=self.omega0)


class ParamSet:
    """Ordered weights and biases ``[W0, b0, W1, b1, ...]`` of one network."""

    def __init__(self, tensors: Sequence[torch.Tensor]):
        self.tensors = [t if t.dtype == DTYPE else t.to(DTYPE) for t in tensors]

    def __iter__(self):
        return iter(self.tensors)

    def __len__(self):
        return len(self.tensors)

    def __getitem__(self, i):
        return self.tensors[i]

    @property
    def count(self) -> int:
        return sum(t.numel() for t in self.tensors)

    def flat(self) -> np.ndarray:
        return np.concatenate([t.detach().numpy().ravel() for t in self.tensors])

    def load_flat(self, values) -> None:
        values = np.asarray(values, dtype=np.float64)
        if values.size != self.count:
            raise ValueError(f"expected {self.count} values, got {values.size}")
        off = 0
        with torch.no_grad():
            for t in self.tensors:
                n = t.numel()
                t.copy_(torch.from_numpy(values[off:off + n].reshape(t.shape).copy()))
                off += n

    def clone(self) -> "ParamSet":
        return ParamSet([t.detach().clone() for t in self.tensors])

    def requires_grad_(self, flag: bool = True) -> "ParamSet":
        for t in self.tensors:
            t.requires_grad_(flag)
        return self

    def check_finite(self) -> None:
        if not all(torch.isfinite(t).all() for t in self.tensors):
            raise ValueError("non-finite parameter values")


def init_params(spec: NetworkSpec, generator: torch.Generator) -> ParamSet:
    """Seeded initialisation.

    Sine nets follow the SIREN scheme (first layer ``U(-1/fan_in, 1/fan_in)``,
    later layers ``U(+-sqrt(6/fan_in)/omega0)``); ELU nets use
    ``U(+-1/sqrt(fan_in))`` for weights and biases.  Output biases start at 0.
    """
    tensors = []
    dims = spec.layer_dims()
    for k, (fan_in, fan_out) in enumerate(dims):
        if spec.activation == "sine":
            bound = 1.0 / fan_in if k == 0 else math.sqrt(6.0 / fan_in) / spec.omega0
        else:
            bound = 1.0 / math.sqrt(fan_in)
        W = (torch.rand(fan_out, fan_in, generator=generator, dtype=DTYPE) * 2 - 1) * bound
        b_bound = 1.0 / math.sqrt(fan_in)
        b = (torch.rand(fan_out, generator=generator, dtype=DTYPE) * 2 - 1) * b_bound
        if k == len(dims) - 1:
            b.zero_()
        tensors += [W, b]
    return ParamSet(tensors)


class Tape:
    """One recorded forward graph; :func:`backward` may consume it once."""

    def __init__(self, output: torch.Tensor, params: Sequence[torch.Tensor]):
        self.output = output
        self.params = list(params)
        self.consumed = False


def _activate(spec: NetworkSpec, z: torch.Tensor) -> torch.Tensor:
    if spec.activation == "sine":
        return torch.sin(spec.omega0 * z)
    return torch.nn.functional.elu(z)


def apply_mlp(spec: NetworkSpec, params: Sequence[torch.Tensor], inputs: torch.Tensor) -> torch.Tensor:
    """Differentiable forward pass on a ``(batch, input_dim)`` tensor."""
    if inputs.shape[-1] != spec.input_dim:
        raise ValueError(f"input width {inputs.shape[-1]} != {spec.input_dim}")
    n_layers = len(params) // 2
    h = inputs
    for k in range(n_layers):
        W, b = params[2 * k], params[2 * k + 1]
        h = h @ W.T + b
        if k < n_layers - 1:
            h = _activate(spec, h)
        if not torch.isfinite(h).all():
            raise OverflowError(f"non-finite activation in layer {k}")
    return h


def mlp_forward(spec: NetworkSpec, params: ParamSet, inputs) -> tuple[torch.Tensor, Tape]:
    """Forward pass that records a tape for :func:`backward`."""
    x = torch.as_tensor(np.asarray(inputs, dtype=np.float64)) if not torch.is_tensor(inputs) else inputs
    leaves = [t.detach().requires_grad_(True) for t in params]
    out = apply_mlp(spec, leaves, x.to(DTYPE))
    return out, Tape(out, leaves)


def backward(tape: Tape, output_cotangent=1.0) -> list[torch.Tensor]:
    """Vector-Jacobian product of the tape output against its parameters.

    Parameters that do not influence the output (for example, ones behind
    :func:`stop_gradient`) receive exact zeros.
    """
    if tape.consumed:
        raise TapeConsumedError("tape already consumed by a previous backward()")
    tape.consumed = True
    cot = torch.as_tensor(output_cotangent, dtype=tape.output.dtype)
    if cot.shape != tape.output.shape:
        cot = cot.expand_as(tape.output)
    grads = torch.autograd.grad(tape.output, tape.params, grad_outputs=cot, allow_unused=True)
    return [torch.zeros_like(p) if g is None else g for p, g in zip(tape.params, grads)]


def stop_gradient(x: torch.Tensor) -> torch.Tensor:
    return x.detach()


class _LstsqFn(torch.autograd.Function):
    """``X = argmin ||A X - B||``; backward from the normal equations.

    With ``Y = (A^H A)^{-1} G`` and residual ``R = B - A X``:
    ``dA = R Y^H - A Y X^H`` and ``dB = A Y``.
    """

    @staticmethod
    def forward(ctx, A, B, context):
        solver = numerics.QRSolver.factor(A.detach().numpy(), context)
        X = torch.from_numpy(solver.solve(B.detach().numpy()))
        ctx.solver = solver
        ctx.save_for_backward(A, B, X)
        return X

    @staticmethod
    def backward(ctx, G):
        A, B, X = ctx.saved_tensors
        Y = torch.from_numpy(ctx.solver.solve_normal(G.detach().numpy()))
        gA = gB = None
        if ctx.needs_input_grad[0]:
            R = B - A @ X
            gA = R @ Y.conj().T - A @ Y @ X.conj().T
        if ctx.needs_input_grad[1]:
            gB = A @ Y
        return gA, gB, None


def lstsq(A: torch.Tensor, B: torch.Tensor, context: str = "") -> torch.Tensor:
    """Differentiable least-squares solve for tall full-rank complex ``A``."""
    if not A.is_complex():
        A = A.to(CDTYPE)
    if not B.is_complex():
        B = B.to(CDTYPE)
    vec = B.dim() == 1
    X = _LstsqFn.apply(A, B.unsqueeze(1) if vec else B, context)
    return X.squeeze(1) if vec else X


@dataclass
class OptimState:
    """Adam moments and hyperparameters for one parameter group."""

    base_lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.99
    eps: float = 1e-15
    weight_decay: float = 1e-6
    min_lr: float = 1e-6
    total_epochs: int | None = None
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    lr: float | None = None

    def current_lr(self) -> float:
        return self.base_lr if self.lr is None else self.lr


def adam_step(params: ParamSet, grads: Sequence[torch.Tensor], state: OptimState):
    """Bias-corrected Adam with L2 decay folded into the gradient.

    Updates ``params`` in place and returns ``(params, state)``.
    """
    if len(grads) != len(params):
        raise ValueError("gradient list does not match parameters")
    if not state.m:
        state.m = [torch.zeros_like(p) for p in params]
        state.v = [torch.zeros_like(p) for p in params]
    for g in grads:
        if not torch.isfinite(g).all():
            raise DivergenceError(f"non-finite gradient at step {state.step + 1}")
    state.step += 1
    t = state.step
    lr = state.current_lr()
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    with torch.no_grad():
        for p, g, m, v in zip(params, grads, state.m, state.v):
            if p.shape != g.shape:
                raise ValueError(f"gradient shape {tuple(g.shape)} != {tuple(p.shape)}")
            g = g + state.weight_decay * p
            # plain elementwise ops (no fused kernels) keep updates reproducible
            m.copy_(state.beta1 * m + (1.0 - state.beta1) * g)
            v.copy_(state.beta2 * v + (1.0 - state.beta2) * (g * g))
            p.copy_(p - lr * (m / c1) / (torch.sqrt(v / c2) + state.eps))
    return params, state


def cosine_lr(base_lr: float, min_lr: float, epoch: float, total_epochs: float) -> float:
    if total_epochs <= 0:
        return base_lr
    return min_lr + (base_lr - min_lr) * (1.0 + math.cos(math.pi * epoch / total_epochs)) / 2.0
