"""Quadratic lifting of the oscillator model and Kronecker-free tensor kernels.

Lifting replaces the sinusoidal coupling by auxiliary states s = sin(delta),
c = cos(delta), giving an exactly quadratic system

    x' = A x + H (x kron x) + B u,    y = C x,

over x = [delta; omega; s; c].  The quadratic coefficient H is a third-order
tensor handled only through structured contractions; no n x n^2 matrix and no
length-n^2 Kronecker vector is ever materialized for full-size systems.

Index conventions, shared by every kernel and test in this package: the
coefficient tensor G of a quadratic map is stored so that

    [H(x kron y)]_p = sum_{a,b} G[p, a, b] * x_a * y_b,

where a indexes the first Kronecker factor and b the second.  With x kron y
placing x_a * y_b at 1-based position (a-1)*n + b, axis a of G is the mode-3
index and axis b the mode-2 index of the tensor; see :func:`mode_k_unfold`.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Union

import numpy as np

from .errors import ValidationError
from .netparams import NetworkParameters

QUARTERS = ("delta", "omega", "sin", "cos")


def _check_matrix(name, M, rows):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != rows:
        raise ValidationError(f"{name} must be 2-d with {rows} rows, got shape {M.shape}")
    return M


@dataclass(frozen=True)
class LiftedState:
    """State vector [delta; omega; s; c] of the lifted quadratic model."""

    x: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        if x.ndim != 1 or x.size % 4 != 0 or x.size == 0:
            raise ValidationError(f"lifted state length must be a positive multiple of 4, got {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ValidationError("lifted state contains non-finite entries")
        object.__setattr__(self, "x", x)

    @property
    def n_o(self) -> int:
        return self.x.size // 4

    @property
    def delta(self) -> np.ndarray:
        return self.x[: self.n_o]

    @property
    def omega(self) -> np.ndarray:
        return self.x[self.n_o : 2 * self.n_o]

    @property
    def s(self) -> np.ndarray:
        return self.x[2 * self.n_o : 3 * self.n_o]

    @property
    def c(self) -> np.ndarray:
        return self.x[3 * self.n_o :]


def lift_state(delta, omega) -> LiftedState:
    """Lift (delta, omega) to x = [delta; omega; sin(delta); cos(delta)]."""
    delta = np.asarray(delta, dtype=float)
    omega = np.asarray(omega, dtype=float)
    if delta.ndim != 1 or omega.shape != delta.shape:
        raise ValidationError(
            f"delta and omega must be 1-d with equal length, got {delta.shape} and {omega.shape}"
        )
    return LiftedState(np.concatenate([delta, omega, np.sin(delta), np.cos(delta)]))


class LiftedHessian:
    """Structured quadratic coefficient tensor of a lifted grid model.

    Only the nonzero coupling blocks are stored: two n_o x n_o coefficient
    tables (sine and cosine parts of the coupling, row-scaled by
    omega_R/(2 J_i)) plus implicit unit selectors for the s'/c' rows.
    All contractions cost O(n_o * r * q) memory.

    With ``symmetrized`` (the default) every bilinear term is averaged over
    its two Kronecker placements, so apply_pair(u, v) == apply_pair(v, u);
    quadratic evaluations H(x kron x) are unaffected by the averaging.
    """

    def __init__(self, sin_coef, cos_coef, symmetrized: bool = True):
        sin_coef = np.asarray(sin_coef, dtype=float)
        cos_coef = np.asarray(cos_coef, dtype=float)
        if sin_coef.ndim != 2 or sin_coef.shape[0] != sin_coef.shape[1]:
            raise ValidationError(f"sin_coef must be square, got {sin_coef.shape}")
        if cos_coef.shape != sin_coef.shape:
            raise ValidationError("sin_coef and cos_coef must have equal shapes")
        if np.any(np.diag(sin_coef) != 0.0) or np.any(np.diag(cos_coef) != 0.0):
            raise ValidationError("coupling coefficient diagonals must be zero")
        self.n_o = sin_coef.shape[0]
        self.sin_coef = sin_coef
        self.cos_coef = cos_coef
        self.symmetrized = bool(symmetrized)

    @classmethod
    def from_params(cls, params: NetworkParameters) -> "LiftedHessian":
        scale = params.omega_R / (2.0 * params.J)
        return cls(
            sin_coef=scale[:, None] * params.K * np.sin(params.gamma),
            cos_coef=scale[:, None] * params.K * np.cos(params.gamma),
        )

    @property
    def n(self) -> int:
        return 4 * self.n_o

    def _split(self, M):
        q = self.n_o
        return M[:q], M[q : 2 * q], M[2 * q : 3 * q], M[3 * q :]

    # -- vector apply ---------------------------------------------------

    def _apply_raw(self, x, y):
        # first factor from x, second from y, before symmetrization
        out = np.zeros(self.n)
        _, _, xs, xc = self._split(x)
        _, yo, ys, yc = self._split(y)
        q = self.n_o
        out[q : 2 * q] = xs * (self.sin_coef @ ys - self.cos_coef @ yc) + xc * (
            self.cos_coef @ ys + self.sin_coef @ yc
        )
        out[2 * q : 3 * q] = xc * yo
        out[3 * q :] = -xs * yo
        return out

    def apply_pair(self, x, y) -> np.ndarray:
        """Evaluate H(x kron y) for state-length vectors x, y."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if x.shape != (self.n,) or y.shape != (self.n,):
            raise ValidationError(f"operands must have shape ({self.n},)")
        if x is y or not self.symmetrized:
            return self._apply_raw(x, y)
        return 0.5 * (self._apply_raw(x, y) + self._apply_raw(y, x))

    # -- matrix contractions (Kronecker-factor products) ----------------

    def _mode1_raw(self, X, Y):
        # out[p, jx, jy] = sum_{a,b} G_raw[p,a,b] X[a,jx] Y[b,jy]
        q = self.n_o
        _, _, X2, X3 = self._split(X)
        Y1 = Y[q : 2 * q]
        Y2 = Y[2 * q : 3 * q]
        Y3 = Y[3 * q :]
        out = np.zeros((self.n, X.shape[1], Y.shape[1]))
        out[q : 2 * q] = np.einsum(
            "ix,iy->ixy", X2, self.sin_coef @ Y2 - self.cos_coef @ Y3
        ) + np.einsum("ix,iy->ixy", X3, self.cos_coef @ Y2 + self.sin_coef @ Y3)
        out[2 * q : 3 * q] = np.einsum("ix,iy->ixy", X3, Y1)
        out[3 * q :] = -np.einsum("ix,iy->ixy", X2, Y1)
        return out

    def mode1_product(self, R, S) -> np.ndarray:
        """H(R kron S) as an n x (r*q) matrix, columns in C order over (j_R, j_S)."""
        R = _check_matrix("R", R, self.n)
        S = _check_matrix("S", S, self.n)
        out = self._mode1_raw(R, S)
        if self.symmetrized:
            out = 0.5 * (out + self._mode1_raw(S, R).transpose(0, 2, 1))
        return out.reshape(self.n, R.shape[1] * S.shape[1])

    def _mode2_contract_a(self, X, Y):
        # out[b, jx, jy] = sum_{p,a} G_raw[p,a,b] X[a,jx] Y[p,jy]
        q = self.n_o
        _, _, X2, X3 = self._split(X)
        _, Y1, Y2, Y3 = self._split(Y)
        out = np.zeros((self.n, X.shape[1], Y.shape[1]))
        Z2 = np.einsum("ix,iy->ixy", X2, Y1)
        Z3 = np.einsum("ix,iy->ixy", X3, Y1)
        out[2 * q : 3 * q] = np.tensordot(self.sin_coef, Z2, axes=(0, 0)) + np.tensordot(
            self.cos_coef, Z3, axes=(0, 0)
        )
        out[3 * q :] = np.tensordot(-self.cos_coef, Z2, axes=(0, 0)) + np.tensordot(
            self.sin_coef, Z3, axes=(0, 0)
        )
        out[q : 2 * q] = np.einsum("ix,iy->ixy", X3, Y2) - np.einsum("ix,iy->ixy", X2, Y3)
        return out

    def _mode2_contract_b(self, X, Y):
        # out[a, jx, jy] = sum_{p,b} G_raw[p,a,b] X[b,jx] Y[p,jy]
        q = self.n_o
        _, X1, X2, X3 = self._split(X)
        _, Y1, Y2, Y3 = self._split(Y)
        out = np.zeros((self.n, X.shape[1], Y.shape[1]))
        out[2 * q : 3 * q] = np.einsum(
            "ix,iy->ixy", self.sin_coef @ X2 - self.cos_coef @ X3, Y1
        ) - np.einsum("ix,iy->ixy", X1, Y3)
        out[3 * q :] = np.einsum(
            "ix,iy->ixy", self.cos_coef @ X2 + self.sin_coef @ X3, Y1
        ) + np.einsum("ix,iy->ixy", X1, Y2)
        return out

    def mode2_product(self, R, S) -> np.ndarray:
        """Mode-2 unfolding product: rows indexed by the second-factor slot.

        Equals mode_2_unfolding(H) @ (R kron S) of the symmetrized tensor,
        where R contracts the first-factor slot and S the output slot.
        """
        R = _check_matrix("R", R, self.n)
        S = _check_matrix("S", S, self.n)
        out = self._mode2_contract_a(R, S)
        if self.symmetrized:
            out = 0.5 * (out + self._mode2_contract_b(R, S))
        return out.reshape(self.n, R.shape[1] * S.shape[1])

    def project(self, W, V) -> "DenseHessian":
        """W^T H (V kron V) as a dense reduced tensor (see project_hessian)."""
        W = _check_matrix("W", W, self.n)
        V = _check_matrix("V", V, self.n)
        q = self.n_o
        W1 = W[q : 2 * q]
        W2 = W[2 * q : 3 * q]
        W3 = W[3 * q :]
        V1 = V[q : 2 * q]
        V2 = V[2 * q : 3 * q]
        V3 = V[3 * q :]
        T = (
            np.einsum("ia,ib,ic->abc", W1, V2, self.sin_coef @ V2, optimize=True)
            - np.einsum("ia,ib,ic->abc", W1, V2, self.cos_coef @ V3, optimize=True)
            + np.einsum("ia,ib,ic->abc", W1, V3, self.cos_coef @ V2, optimize=True)
            + np.einsum("ia,ib,ic->abc", W1, V3, self.sin_coef @ V3, optimize=True)
            + np.einsum("ia,ib,ic->abc", W2, V3, V1, optimize=True)
            - np.einsum("ia,ib,ic->abc", W3, V2, V1, optimize=True)
        )
        if self.symmetrized:
            T = 0.5 * (T + T.transpose(0, 2, 1))
        return DenseHessian(T)

    def to_mode1(self) -> np.ndarray:
        """Dense n x n^2 mode-1 unfolding; test/debug use at small n only."""
        eye = np.eye(self.n)
        return self.mode1_product(eye, eye)

    def to_dense(self) -> "DenseHessian":
        return DenseHessian(self.to_mode1().reshape(self.n, self.n, self.n))


class DenseHessian:
    """Dense third-order quadratic coefficient tensor.

    Used for reduced models, where n_r is small.  The tensor is applied
    exactly as stored; construction (projection of a symmetrized operator)
    is what makes it symmetric, not this class.
    """

    def __init__(self, tensor):
        T = np.asarray(tensor, dtype=float)
        if T.ndim != 3 or len(set(T.shape)) != 1:
            raise ValidationError(f"tensor must be cubic 3-d, got shape {T.shape}")
        self.tensor = T

    @property
    def n(self) -> int:
        return self.tensor.shape[0]

    def apply_pair(self, x, y) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if x.shape != (self.n,) or y.shape != (self.n,):
            raise ValidationError(f"operands must have shape ({self.n},)")
        # two matvecs; never forms the length-n^2 Kronecker vector
        return (self.tensor @ y) @ x

    def mode1_product(self, R, S) -> np.ndarray:
        R = _check_matrix("R", R, self.n)
        S = _check_matrix("S", S, self.n)
        out = np.einsum("pab,aj,bk->pjk", self.tensor, R, S, optimize=True)
        return out.reshape(self.n, R.shape[1] * S.shape[1])

    def mode2_product(self, R, S) -> np.ndarray:
        R = _check_matrix("R", R, self.n)
        S = _check_matrix("S", S, self.n)
        out = np.einsum("pab,aj,pk->bjk", self.tensor, R, S, optimize=True)
        return out.reshape(self.n, R.shape[1] * S.shape[1])

    def project(self, W, V) -> "DenseHessian":
        W = _check_matrix("W", W, self.n)
        V = _check_matrix("V", V, self.n)
        return DenseHessian(
            np.einsum("pab,pi,aj,bk->ijk", self.tensor, W, V, V, optimize=True)
        )

    def to_mode1(self) -> np.ndarray:
        return self.tensor.reshape(self.n, self.n * self.n)

    def to_dense(self) -> "DenseHessian":
        return self


HessianLike = Union[LiftedHessian, DenseHessian]


def kron_factor_product(H: HessianLike, mode: int, R, S) -> np.ndarray:
    """Contract a quadratic coefficient tensor with two factor matrices.

    mode 1 returns H @ (R kron S); mode 2 returns the mode-2 unfolding
    product with R on the first-factor slot and S on the output slot.
    Memory stays O(n * r * q); R kron S (n^2 rows) is never formed.
    """
    if mode == 1:
        return H.mode1_product(R, S)
    if mode == 2:
        return H.mode2_product(R, S)
    raise ValidationError(f"mode must be 1 or 2, got {mode!r}")


def project_hessian(H: HessianLike, W, V) -> DenseHessian:
    """Reduced tensor H_r with H_r(y kron z) = W^T H(V y kron V z)."""
    return H.project(W, V)


def _unfold_shape(shape, ncols):
    if np.ndim(shape) == 0:
        shape = (int(shape),) * 3
    n1, n2, n3 = (int(v) for v in shape)
    if n2 * n3 != ncols:
        raise ValidationError(f"mode-1 matrix has {ncols} columns, expected n2*n3 = {n2 * n3}")
    return n1, n2, n3


def mode_k_unfold(mode1_matrix, k: int, shape) -> np.ndarray:
    """Re-unfold a tensor given by its mode-1 matrix along mode k.

    ``shape`` is the tensor shape (n1, n2, n3), or a single int for cubic
    tensors.  Mode-1 columns are ordered with the mode-3 index slowest
    (column j = (i3-1)*n2 + i2, 1-based); the other unfoldings follow the
    same cyclic ordering.
    """
    M = np.asarray(mode1_matrix)
    if M.ndim != 2:
        raise ValidationError(f"mode-1 matrix must be 2-d, got shape {M.shape}")
    n1, n2, n3 = _unfold_shape(shape, M.shape[1])
    if M.shape[0] != n1:
        raise ValidationError(f"mode-1 matrix has {M.shape[0]} rows, expected {n1}")
    T = M.reshape(n1, n3, n2)  # axes (i1, i3, i2)
    if k == 1:
        return M.copy()
    if k == 2:
        return T.transpose(2, 1, 0).reshape(n2, n3 * n1)
    if k == 3:
        return T.transpose(1, 2, 0).reshape(n3, n2 * n1)
    raise ValidationError(f"k must be 1, 2, or 3, got {k!r}")


def mode_k_fold(unfolded, k: int, shape) -> np.ndarray:
    """Inverse of :func:`mode_k_unfold`: recover the mode-1 matrix."""
    M = np.asarray(unfolded)
    if M.ndim != 2:
        raise ValidationError(f"unfolded matrix must be 2-d, got shape {M.shape}")
    if np.ndim(shape) == 0:
        shape = (int(shape),) * 3
    n1, n2, n3 = (int(v) for v in shape)
    if k == 1:
        expected = (n1, n2 * n3)
    elif k == 2:
        expected = (n2, n3 * n1)
    elif k == 3:
        expected = (n3, n2 * n1)
    else:
        raise ValidationError(f"k must be 1, 2, or 3, got {k!r}")
    if M.shape != expected:
        raise ValidationError(f"mode-{k} unfolding must have shape {expected}, got {M.shape}")
    if k == 1:
        return M.copy()
    if k == 2:
        T = M.reshape(n2, n3, n1).transpose(2, 1, 0)  # back to (i1, i3, i2)
    else:
        T = M.reshape(n3, n2, n1).transpose(2, 0, 1)
    return T.reshape(n1, n2 * n3)


@dataclass(frozen=True)
class QuadraticSystem:
    """Quadratic state-space model x' = A x + H(x kron x) + B u, y = C x.

    ``state_offset`` is set on shifted systems and records the x0 the
    shift was taken around, so outputs reconstruct as y = C x0 + C xbar.
    """

    A: np.ndarray
    H: Optional[HessianLike]
    B: np.ndarray
    C: np.ndarray
    x0: np.ndarray
    state_offset: Optional[np.ndarray] = None

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValidationError(f"A must be square, got shape {A.shape}")
        n = A.shape[0]
        B = _check_matrix("B", self.B, n)
        C = np.asarray(self.C, dtype=float)
        if C.ndim != 2 or C.shape[1] != n:
            raise ValidationError(f"C must be 2-d with {n} columns, got shape {C.shape}")
        x0 = np.asarray(self.x0, dtype=float)
        if x0.shape != (n,):
            raise ValidationError(f"x0 must have shape ({n},), got {x0.shape}")
        if self.H is not None and self.H.n != n:
            raise ValidationError(f"H acts on dimension {self.H.n}, expected {n}")
        offset = self.state_offset
        if offset is not None:
            offset = np.asarray(offset, dtype=float)
            if offset.shape != (n,):
                raise ValidationError(f"state_offset must have shape ({n},), got {offset.shape}")
        for name, arr in (("A", A), ("B", B), ("C", C), ("x0", x0), ("state_offset", offset)):
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return self.C.shape[0]

    @property
    def output_offset(self) -> np.ndarray:
        """Constant output term C x0 carried by shifted systems."""
        if self.state_offset is None:
            return np.zeros(self.p)
        return self.C @ self.state_offset


def build_quadratic(
    params: NetworkParameters, delta0=None, omega0=None
) -> QuadraticSystem:
    """Lift a grid model to its exactly quadratic form.

    A has identity and damping blocks on the omega columns only, B carries
    the constant drive on a single input column (u = 1), and C reads the
    mean of the phase angles.  The initial state is the lift of
    (delta0, omega0), both defaulting to zero.
    """
    n_o = params.n_o
    n = 4 * n_o
    if delta0 is None:
        delta0 = np.zeros(n_o)
    if omega0 is None:
        omega0 = np.zeros(n_o)
    A = np.zeros((n, n))
    idx = np.arange(n_o)
    A[idx, n_o + idx] = 1.0
    A[n_o + idx, n_o + idx] = -params.D / (2.0 * params.J)
    B = np.zeros((n, 1))
    B[n_o + idx, 0] = params.omega_R / (2.0 * params.J) * params.F
    C = np.zeros((1, n))
    C[0, :n_o] = 1.0 / n_o
    return QuadraticSystem(
        A=A,
        H=LiftedHessian.from_params(params),
        B=B,
        C=C,
        x0=lift_state(delta0, omega0).x,
    )


def quadratic_rhs(sys: QuadraticSystem, x, u) -> np.ndarray:
    """Evaluate A x + H(x kron x) + B u without forming x kron x."""
    x = np.asarray(x, dtype=float)
    if x.shape != (sys.n,):
        raise ValidationError(f"x must have shape ({sys.n},), got {x.shape}")
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if u.shape != (sys.m,):
        raise ValidationError(f"u must have shape ({sys.m},), got {u.shape}")
    out = sys.A @ x + sys.B @ u
    if sys.H is not None:
        out += sys.H.apply_pair(x, x)
    return out


def shift_system(sys: QuadraticSystem, x0=None) -> QuadraticSystem:
    """Change variables to xbar = x - x0 so the initial condition is zero.

    The shifted system has Abar = A + A0 with A0 x = H(x kron x0 + x0 kron x),
    Bbar = [B, B0] with B0 = A x0 + H(x0 kron x0), and augmented input
    ubar = [u; 1].  Outputs reconstruct as y = C x0 + C xbar, exposed via
    ``output_offset``.
    """
    if x0 is None:
        x0 = sys.x0
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (sys.n,):
        raise ValidationError(f"x0 must have shape ({sys.n},), got {x0.shape}")
    n = sys.n
    if sys.H is None:
        A0 = np.zeros((n, n))
        B0 = sys.A @ x0
    else:
        col = x0.reshape(n, 1)
        eye = np.eye(n)
        A0 = sys.H.mode1_product(eye, col).reshape(n, n) + sys.H.mode1_product(
            col, eye
        ).reshape(n, n)
        B0 = sys.A @ x0 + sys.H.apply_pair(x0, x0)
    offset = x0 if sys.state_offset is None else x0 + sys.state_offset
    return QuadraticSystem(
        A=sys.A + A0,
        H=sys.H,
        B=np.column_stack([sys.B, B0]),
        C=sys.C,
        x0=np.zeros(n),
        state_offset=offset,
    )


def dump_triplets(sys: QuadraticSystem, path) -> None:
    """Write A, B, C as 1-based sparse triplets for external cross-checks."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# matrix row col value (1-based)\n")
        for name, M in (("A", sys.A), ("B", sys.B), ("C", sys.C)):
            rows, cols = np.nonzero(M)
            for r, c in zip(rows, cols):
                fh.write(f"{name} {r + 1} {c + 1} {float(M[r, c])!r}\n")
