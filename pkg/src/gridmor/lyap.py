"""Dense Lyapunov solves with low-rank output, SVD compression, SPD repair.

The solver is Schur-based: one real Schur decomposition per solve, a
quasi-triangular Sylvester back-substitution (LAPACK ``trsyl``), then a
symmetric eigendecomposition of the solution with negative eigenvalues
clamped to zero to extract a PSD factor.  Matrices here are desk-scale
(n up to a few hundred), so O(n^3) dense solves are the right tool.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy import linalg

from .errors import FactorizationError, StabilityError, ValidationError

# compression tolerance on squared singular values; effectively machine epsilon
MACHINE_TAU = 1.1102e-16


@dataclass(frozen=True)
class LowRankFactor:
    """An n x r factor R representing the PSD matrix R @ R.T."""

    factor: np.ndarray
    tolerance_used: float
    residual: Optional[float] = None

    def __post_init__(self):
        R = np.asarray(self.factor, dtype=float)
        if R.ndim != 2:
            raise ValidationError(f"factor must be 2-d, got shape {R.shape}")
        if not np.all(np.isfinite(R)):
            raise ValidationError("factor contains non-finite entries")
        object.__setattr__(self, "factor", R)

    @property
    def n(self) -> int:
        return self.factor.shape[0]

    @property
    def rank(self) -> int:
        return self.factor.shape[1]

    def gram(self) -> np.ndarray:
        """Densify R @ R.T (small systems / tests)."""
        return self.factor @ self.factor.T


def truncate_lr(R, tau: float = MACHINE_TAU) -> LowRankFactor:
    """SVD compression of a low-rank factor.

    Keeps singular directions while sigma_i^2 > tau * sigma_1^2; the leading
    one survives whenever it is nonzero.  tau = 0 preserves R @ R.T exactly.
    """
    if tau < 0.0:
        raise ValidationError(f"tau must be >= 0, got {tau!r}")
    R = np.asarray(R, dtype=float)
    if R.ndim != 2:
        raise ValidationError(f"factor must be 2-d, got shape {R.shape}")
    n = R.shape[0]
    if R.shape[1] == 0 or not np.any(R):
        return LowRankFactor(np.zeros((n, 0)), tau)
    U, sigma, _ = np.linalg.svd(R, full_matrices=False)
    keep = int(np.count_nonzero(sigma**2 > tau * sigma[0] ** 2))
    if sigma[0] > 0.0:
        keep = max(keep, 1)
    return LowRankFactor(U[:, :keep] * sigma[:keep], tau)


def _schur_real_parts(T: np.ndarray) -> np.ndarray:
    """Eigenvalue real parts read off a real Schur form's diagonal blocks."""
    n = T.shape[0]
    parts = np.empty(n)
    i = 0
    while i < n:
        if i + 1 < n and T[i + 1, i] != 0.0:
            # 2x2 block: complex pair with real part = trace/2
            parts[i] = parts[i + 1] = 0.5 * (T[i, i] + T[i + 1, i + 1])
            i += 2
        else:
            parts[i] = T[i, i]
            i += 1
    return parts


def lyapunov_residual(A, factor, G) -> float:
    """Frobenius norm of A X + X A^T + G G^T at X = factor @ factor.T."""
    A = np.asarray(A, dtype=float)
    R = np.asarray(factor, dtype=float)
    G = np.asarray(G, dtype=float)
    X = R @ R.T
    return float(np.linalg.norm(A @ X + X @ A.T + G @ G.T))


def solve_lyapunov_lr(A, G, transpose: bool = False, tau: float = MACHINE_TAU) -> LowRankFactor:
    """Low-rank factor of the solution of A X + X A^T + G G^T = 0.

    With ``transpose`` the equation is A^T X + X A + G G^T = 0 (observability
    form; pass C^T as G).  A (or A^T) must be Hurwitz, checked on the Schur
    form.  The returned factor carries the achieved residual norm.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValidationError(f"A must be square, got shape {A.shape}")
    n = A.shape[0]
    G = np.asarray(G, dtype=float)
    if G.ndim == 1:
        G = G.reshape(n, 1)
    if G.shape[0] != n:
        raise ValidationError(f"G must have {n} rows, got shape {G.shape}")
    A_op = A.T if transpose else A
    if G.shape[1] == 0 or not np.any(G):
        return LowRankFactor(np.zeros((n, 0)), tau, residual=0.0)

    T, Z = linalg.schur(A_op, output="real")
    max_real = float(np.max(_schur_real_parts(T)))
    if max_real >= 0.0:
        raise StabilityError(
            f"matrix is not Hurwitz: eigenvalue with real part {max_real:.6g} >= 0"
        )
    rhs = Z.T @ (G @ G.T) @ Z
    trsyl = linalg.get_lapack_funcs(("trsyl",), (T, rhs))[0]
    # solves T Y + Y T^T = scale * (-rhs) in the Schur basis
    Y, scale, info = trsyl(T, T, -rhs, tranb="T")
    if info < 0:
        raise FactorizationError(f"triangular Sylvester solve failed (info={info})")
    X = Z @ (Y / scale) @ Z.T
    X = 0.5 * (X + X.T)
    eigvals, eigvecs = np.linalg.eigh(X)
    order = np.argsort(eigvals)[::-1]
    eigvals = np.clip(eigvals[order], 0.0, None)
    factor = eigvecs[:, order] * np.sqrt(eigvals)
    out = truncate_lr(factor, tau)
    return replace(out, residual=lyapunov_residual(A_op, out.factor, G))


def nearest_spd(X, epsilon_scale: float = 1e-10) -> np.ndarray:
    """Nearest symmetric PSD matrix (Frobenius sense) plus a small identity shift.

    Symmetrize B = (X + X^T)/2, average B with its polar factor, then add
    eps * I with eps = epsilon_scale * ||X||_2 so Cholesky is guaranteed to
    succeed on the result.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] != X.shape[1]:
        raise ValidationError(f"X must be square, got shape {X.shape}")
    B = 0.5 * (X + X.T)
    _, P = linalg.polar(B)
    Y = 0.5 * (B + P)
    Y = 0.5 * (Y + Y.T)
    eps = epsilon_scale * (np.linalg.norm(X, 2) if X.size else 0.0)
    return Y + eps * np.eye(X.shape[0])


def cholesky_factor(P) -> np.ndarray:
    """Lower-triangular L with L @ L.T = P; FactorizationError if not SPD."""
    P = np.asarray(P, dtype=float)
    try:
        return np.linalg.cholesky(P)
    except np.linalg.LinAlgError as exc:
        raise FactorizationError(f"Cholesky failed: {exc}") from exc
