"""Dense linear algebra shared by the DMD baseline, the neural model and the
export tools.

Everything here is a pure function of numpy arrays in float64/complex128.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla


class IllConditionedBasisError(np.linalg.LinAlgError):
    """Raised when a least-squares basis is numerically rank deficient."""

    def __init__(self, condition: float, context: str = ""):
        self.condition = float(condition)
        self.context = context
        msg = f"ill-conditioned basis (condition estimate {self.condition:.3e})"
        if context:
            msg = f"{context}: {msg}"
        super().__init__(msg)


class EigenConvergenceError(np.linalg.LinAlgError):
    pass


RANK_TOL = 1e-12


@dataclass(frozen=True)
class SvdFactors:
    U: np.ndarray
    singular_values: np.ndarray
    V: np.ndarray

    @property
    def rank(self) -> int:
        return self.singular_values.shape[0]

    def reconstruct(self) -> np.ndarray:
        return (self.U * self.singular_values) @ self.V.conj().T


@dataclass(frozen=True)
class EigenPairs:
    values: np.ndarray
    vectors: np.ndarray


def _as_matrix(A, name="A") -> np.ndarray:
    A = np.asarray(A)
    if A.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError(f"{name} contains non-finite entries")
    if np.iscomplexobj(A):
        return A.astype(np.complex128, copy=False)
    return A.astype(np.float64, copy=False)


def fix_column_phase(U: np.ndarray, V: np.ndarray | None = None):
    """Rotate each column of ``U`` so its largest-magnitude entry is real and
    positive, applying the same unit factor to the matching column of ``V``."""
    idx = np.argmax(np.abs(U), axis=0)
    pivot = U[idx, np.arange(U.shape[1])]
    mag = np.abs(pivot)
    phase = np.where(mag > 0, pivot / np.where(mag > 0, mag, 1.0), 1.0)
    U = U / phase
    if V is not None:
        # A = U S V^H is unchanged when both columns carry the same unit factor
        V = V * phase.conj()
        return U, V
    return U


def svd_truncated(A, r: int) -> SvdFactors:
    """Rank-``r`` truncated SVD with a deterministic column phase.

    Trailing singular values may be zero when ``A`` has rank below ``r``.
    """
    A = _as_matrix(A)
    n, m = A.shape
    if not 0 < r <= min(n, m):
        raise ValueError(f"rank {r} outside 1..{min(n, m)}")
    U, s, Vh = sla.svd(A, full_matrices=False, lapack_driver="gesvd")
    U, V = U[:, :r], Vh[:r].conj().T
    U, V = fix_column_phase(U, V)
    return SvdFactors(U=U, singular_values=s[:r].copy(), V=V)


@dataclass(frozen=True)
class QRSolver:
    """Pivoted Householder QR of a tall matrix, reusable for several
    right-hand sides and for normal-equation solves with ``A^H A``."""

    Q: np.ndarray
    R: np.ndarray
    perm: np.ndarray
    condition: float

    @classmethod
    def factor(cls, A, context: str = "") -> "QRSolver":
        A = _as_matrix(A)
        n, r = A.shape
        if n < r:
            raise ValueError(f"need rows >= cols, got {A.shape}")
        Q, R, perm = sla.qr(A, mode="economic", pivoting=True)
        s = sla.svdvals(R)
        cond = np.inf if s[-1] == 0 else s[0] / s[-1]
        if s[-1] <= RANK_TOL * s[0]:
            raise IllConditionedBasisError(cond, context)
        return cls(Q=Q, R=R, perm=perm, condition=float(cond))

    def solve(self, B) -> np.ndarray:
        B = np.asarray(B)
        vec = B.ndim == 1
        if vec:
            B = B[:, None]
        y = sla.solve_triangular(self.R, self.Q.conj().T @ B)
        X = np.empty_like(y)
        X[self.perm] = y
        return X[:, 0] if vec else X

    def solve_normal(self, G) -> np.ndarray:
        """Return ``(A^H A)^{-1} G`` using the stored triangular factor."""
        G = np.asarray(G)
        vec = G.ndim == 1
        if vec:
            G = G[:, None]
        # A P = Q R  =>  A^H A = P R^H R P^T
        Gp = G[self.perm]
        w = sla.solve_triangular(self.R, Gp, trans="C")
        w = sla.solve_triangular(self.R, w)
        Y = np.empty_like(w)
        Y[self.perm] = w
        return Y[:, 0] if vec else Y


def least_squares_solve(A, B, context: str = "") -> np.ndarray:
    """Minimise ``||A X - B||_F`` for tall full-rank ``A``.

    Raises
    ------
    IllConditionedBasisError
        If the smallest singular value of ``A`` is below ``1e-12`` times
        the largest.
    """
    return QRSolver.factor(A, context).solve(B)


def basis_pinv(Phi) -> np.ndarray:
    """Explicit pseudoinverse, for export and analysis only."""
    Phi = _as_matrix(Phi, "Phi")
    return least_squares_solve(Phi, np.eye(Phi.shape[0], dtype=Phi.dtype))


def _eig_order(values: np.ndarray) -> np.ndarray:
    # lexsort uses the last key as primary
    return np.lexsort((-values.imag, -values.real, -np.abs(values)))


def eig_dense(A) -> EigenPairs:
    """Eigenpairs of a small square matrix, sorted by descending magnitude
    (ties: descending real part, then descending imaginary part)."""
    A = _as_matrix(A)
    r = A.shape[0]
    if A.shape != (r, r):
        raise ValueError(f"square matrix required, got {A.shape}")
    if r > 64:
        raise ValueError("eig_dense is meant for reduced operators (r <= 64)")
    try:
        w, v = sla.eig(A, check_finite=False)
    except np.linalg.LinAlgError as exc:
        cond = np.linalg.cond(A)
        raise EigenConvergenceError(
            f"QR iteration did not converge (cond(A)={cond:.3e})") from exc
    w = w.astype(np.complex128)
    v = v.astype(np.complex128)
    order = _eig_order(w)
    w, v = w[order], v[:, order]
    v = v / np.linalg.norm(v, axis=0)
    return EigenPairs(values=w, vectors=v)
