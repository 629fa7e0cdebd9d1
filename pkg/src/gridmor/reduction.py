"""Projection-based reduction of shifted quadratic grid models.

Two routes produce a reduced model x̂' = A_r x̂ + H_r(x̂ kron x̂) + B_r u:

* balanced truncation over the frequency block of the truncated-series
  Gramians, with the square-root algorithm and a block-diagonal basis
  (four identical blocks, one per state quarter), plus an offline
  steady-state adjustment of the reduced angle equations;
* a plain POD Galerkin basis from snapshots of the shifted system.

Both are wrapped in sklearn-style estimators whose transform maps full
lifted states to reduced coordinates.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .errors import (
    ConvergenceError,
    FactorizationError,
    RankError,
    SimulationFailure,
    ValidationError,
)
from .gramians import GramianConfig, GramianPair, approx_gramians
from .lift import DenseHessian, QuadraticSystem, project_hessian
from .lyap import MACHINE_TAU, cholesky_factor, nearest_spd
from .sim import Trajectory, as_input, integrate, simulate_quadratic

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ProjectionPair:
    """Biorthogonal projection basis (W^T V = I).

    For balanced truncation V and W are block-diagonal with four copies of
    the per-quarter blocks V_block, W_block; POD uses a single orthonormal
    basis with W = V and no block structure.
    """

    V: np.ndarray
    W: np.ndarray
    V_block: Optional[np.ndarray] = None
    W_block: Optional[np.ndarray] = None
    singular_values: Optional[np.ndarray] = None

    def __post_init__(self):
        V = np.asarray(self.V, dtype=float)
        W = np.asarray(self.W, dtype=float)
        if V.ndim != 2 or W.shape != V.shape:
            raise ValidationError(f"V and W must share a 2-d shape, got {V.shape} and {W.shape}")
        if V.shape[1] > V.shape[0]:
            raise ValidationError(f"projection cannot enlarge the state: shape {V.shape}")
        defect = float(np.max(np.abs(W.T @ V - np.eye(V.shape[1]))))
        if defect > 1e-8:
            raise ValidationError(f"projections are not biorthogonal: max |W^T V - I| = {defect:.3e}")
        object.__setattr__(self, "V", V)
        object.__setattr__(self, "W", W)

    @property
    def n(self) -> int:
        return self.V.shape[0]

    @property
    def n_r(self) -> int:
        return self.V.shape[1]

    @property
    def block_size(self) -> Optional[int]:
        return None if self.V_block is None else self.V_block.shape[0]


@dataclass(frozen=True)
class ReducedQuadraticModel:
    """Reduced quadratic model with reconstruction data.

    The reduced state starts at zero (models are built from shifted
    systems); full states reconstruct as x = x0_full + V x̂ and outputs as
    y = y_offset + C_r x̂.  ``omega_s`` is the steady-frequency shift of
    the angle equations (balanced truncation only): when set, simulation
    uses deltâ' = (A_r x̂ + ...)_deltâ - omega_s.
    """

    A_r: np.ndarray
    H_r: DenseHessian
    B_r: np.ndarray
    C_r: np.ndarray
    projections: ProjectionPair
    x0_full: np.ndarray
    y_offset: np.ndarray
    method: str
    omega_s: Optional[np.ndarray] = None

    def __post_init__(self):
        A = np.asarray(self.A_r, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValidationError(f"A_r must be square, got shape {A.shape}")
        r = A.shape[0]
        B = np.asarray(self.B_r, dtype=float)
        C = np.asarray(self.C_r, dtype=float)
        if B.ndim != 2 or B.shape[0] != r:
            raise ValidationError(f"B_r must be 2-d with {r} rows, got {B.shape}")
        if C.ndim != 2 or C.shape[1] != r:
            raise ValidationError(f"C_r must be 2-d with {r} columns, got {C.shape}")
        if self.H_r.n != r:
            raise ValidationError(f"H_r acts on dimension {self.H_r.n}, expected {r}")
        if self.method not in ("bt", "pod"):
            raise ValidationError(f"method must be 'bt' or 'pod', got {self.method!r}")
        if self.method == "bt" and r % 4 != 0:
            raise ValidationError(f"balanced-truncation n_r must be divisible by 4, got {r}")
        x0 = np.asarray(self.x0_full, dtype=float)
        y0 = np.atleast_1d(np.asarray(self.y_offset, dtype=float))
        if x0.shape != (self.projections.n,):
            raise ValidationError(
                f"x0_full must have shape ({self.projections.n},), got {x0.shape}"
            )
        if y0.shape != (C.shape[0],):
            raise ValidationError(f"y_offset must have shape ({C.shape[0]},), got {y0.shape}")
        omega_s = self.omega_s
        if omega_s is not None:
            omega_s = np.asarray(omega_s, dtype=float)
            if self.method != "bt":
                raise ValidationError("omega_s applies to balanced-truncation models only")
            if omega_s.shape != (r // 4,):
                raise ValidationError(f"omega_s must have shape ({r // 4},), got {omega_s.shape}")
        for name, arr in (
            ("A_r", A), ("B_r", B), ("C_r", C), ("x0_full", x0),
            ("y_offset", y0), ("omega_s", omega_s),
        ):
            object.__setattr__(self, name, arr)

    @property
    def n_r(self) -> int:
        return self.A_r.shape[0]

    @property
    def n(self) -> int:
        return self.projections.n

    @property
    def m(self) -> int:
        return self.B_r.shape[1]


def _chol_with_repair(P: np.ndarray, label: str) -> np.ndarray:
    try:
        return cholesky_factor(P)
    except FactorizationError:
        logger.warning("%s gramian block is not SPD; applying nearest-SPD repair", label)
        return cholesky_factor(nearest_spd(P))


def bt_projections(gram: GramianPair, n_r: int) -> ProjectionPair:
    """Square-root balanced truncation of the frequency Gramian blocks.

    Extracts the second n_o x n_o diagonal blocks of P_T and Q_T, Cholesky
    factors them (with nearest-SPD repair on failure), takes the SVD of
    R_w @ S_w.T, and assembles block-diagonal projections from the leading
    n_r/4 singular directions.
    """
    if not (isinstance(n_r, (int, np.integer)) and n_r > 0 and n_r % 4 == 0):
        raise ValidationError(f"n_r must be a positive multiple of 4, got {n_r!r}")
    if gram.n % 4 != 0:
        raise ValidationError(f"gramian dimension {gram.n} is not a lifted-state dimension")
    n_o = gram.n // 4
    r_blk = n_r // 4
    X = gram.P_factor.factor[n_o : 2 * n_o, :]
    Z = gram.Q_factor.factor[n_o : 2 * n_o, :]
    R_w = _chol_with_repair(X @ X.T, "reachability")
    S_w = _chol_with_repair(Z @ Z.T, "observability")
    U, sigma, Vt = np.linalg.svd(R_w @ S_w.T)
    max_rank = int(np.count_nonzero(sigma > n_o * np.finfo(float).eps * sigma[0]))
    if r_blk > max_rank:
        raise RankError(
            f"requested n_r = {n_r} needs {r_blk} directions per block, but the "
            f"balanced cross product has numerical rank {max_rank} "
            f"(maximum n_r = {4 * max_rank})",
            max_rank=4 * max_rank,
        )
    scale = 1.0 / np.sqrt(sigma[:r_blk])
    V_blk = R_w.T @ U[:, :r_blk] * scale
    W_blk = S_w.T @ Vt[:r_blk].T * scale
    eye4 = np.eye(4)
    return ProjectionPair(
        V=np.kron(eye4, V_blk),
        W=np.kron(eye4, W_blk),
        V_block=V_blk,
        W_block=W_blk,
        singular_values=sigma,
    )


def assemble_reduced(
    sys: QuadraticSystem, proj: ProjectionPair, method: str = "bt"
) -> ReducedQuadraticModel:
    """Project a shifted quadratic system onto a reduced basis.

    A_r = W^T A V, B_r = W^T B, C_r = C V; the quadratic tensor is reduced
    by successive mode contractions without forming V kron V.
    """
    if proj.n != sys.n:
        raise ValidationError(f"projection rows {proj.n} do not match system dimension {sys.n}")
    V, W = proj.V, proj.W
    if sys.H is None:
        H_r = DenseHessian(np.zeros((proj.n_r,) * 3))
    else:
        H_r = project_hessian(sys.H, W, V)
    x0_full = sys.state_offset if sys.state_offset is not None else sys.x0
    return ReducedQuadraticModel(
        A_r=W.T @ sys.A @ V,
        H_r=H_r,
        B_r=W.T @ sys.B,
        C_r=sys.C @ V,
        projections=proj,
        x0_full=x0_full,
        y_offset=sys.output_offset,
        method=method,
    )


def reduced_rhs(model: ReducedQuadraticModel, xhat, u) -> np.ndarray:
    """Reduced-model right-hand side, including the omega_s angle shift."""
    xhat = np.asarray(xhat, dtype=float)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    out = model.A_r @ xhat + model.H_r.apply_pair(xhat, xhat) + model.B_r @ u
    if model.omega_s is not None:
        out[: model.n_r // 4] -= model.omega_s
    return out


def _check_angle_decoupling(model: ReducedQuadraticModel) -> None:
    # the BT block structure must make every equation independent of the
    # reduced angle coordinates; this is what licenses restricting to the
    # (omega, s, c) subsystem below
    r = model.n_r // 4
    worst = max(
        float(np.max(np.abs(model.A_r[:, :r]), initial=0.0)),
        float(np.max(np.abs(model.H_r.tensor[:, :r, :]), initial=0.0)),
        float(np.max(np.abs(model.H_r.tensor[:, :, :r]), initial=0.0)),
    )
    if worst > 1e-10:
        raise ValidationError(
            f"reduced right-hand side depends on the angle coordinates "
            f"(max coefficient {worst:.3e}); steady-state adjustment requires "
            f"block-diagonal projections"
        )


def steady_state_adjust(
    model: ReducedQuadraticModel,
    nominal_u=None,
    horizon: float = 100.0,
    tol: float = 1e-8,
) -> ReducedQuadraticModel:
    """Shift the reduced angle equations by the steady drift omega_s.

    Integrates the autonomous (omega, s, c) subsystem under the nominal
    input until ``horizon``, refines by damped Newton if the endpoint
    residual exceeds ``tol``, and stores omega_s so that simulation uses
    deltâ' = omegâ-part - omega_s.  Only the angle rows change.
    """
    if model.method != "bt":
        raise ValidationError("steady-state adjustment requires a balanced-truncation model")
    _check_angle_decoupling(model)
    r = model.n_r // 4
    if nominal_u is None:
        nominal_u = np.ones(model.m)
    nominal_u = np.atleast_1d(np.asarray(nominal_u, dtype=float))
    if nominal_u.shape != (model.m,):
        raise ValidationError(f"nominal_u must have shape ({model.m},), got {nominal_u.shape}")
    A_sub = model.A_r[r:, r:]
    T_sub = model.H_r.tensor[r:, r:, r:]
    b_sub = model.B_r[r:] @ nominal_u

    def f_sub(z):
        return A_sub @ z + (T_sub @ z) @ z + b_sub

    z = np.zeros(3 * r)
    try:
        # coarse settling only; the Newton polish below supplies the accuracy
        traj = integrate(
            lambda t, zz: f_sub(zz),
            z,
            t_span=(0.0, float(horizon)),
            rtol=1e-8,
            atol=1e-10,
            output_grid=2,
        )
        z = traj.states[-1]
    except SimulationFailure as exc:
        logger.warning("steady-state settling integration failed (%s); trying Newton only", exc)
        z = np.zeros(3 * r)
    res = float(np.linalg.norm(f_sub(z)))
    if res > tol:
        z, res = _newton_refine(f_sub, A_sub, T_sub, z, tol)
    if res > tol:
        raise ConvergenceError(
            f"no steady state found for the reduced drift subsystem: residual {res:.3e} > {tol:g}"
        )
    omega_s = z[:r] + model.B_r[:r] @ nominal_u
    return replace(model, omega_s=omega_s)


def _newton_refine(f_sub, A_sub, T_sub, z, tol, max_iter: int = 50):
    res = float(np.linalg.norm(f_sub(z)))
    for _ in range(max_iter):
        if res <= tol:
            break
        J = A_sub + T_sub @ z + (T_sub.transpose(0, 2, 1) @ z)
        try:
            step = np.linalg.solve(J, -f_sub(z))
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(J, -f_sub(z), rcond=None)[0]
        lam = 1.0
        while lam > 1e-8:
            z_new = z + lam * step
            res_new = float(np.linalg.norm(f_sub(z_new)))
            if res_new < res:
                z, res = z_new, res_new
                break
            lam *= 0.5
        else:
            break  # no descent direction left
    return z, res


def pod_reduce(
    sys: QuadraticSystem,
    snapshots: Trajectory,
    n_r: int,
    block_structure: bool = False,
) -> ReducedQuadraticModel:
    """Galerkin reduction onto the leading left singular snapshot directions.

    W = V is orthonormal, so the pair is trivially biorthogonal.  With
    ``block_structure`` the quarters of every snapshot are pooled and a
    single per-quarter block is replicated four times (experimental
    variant; the default matches the plain method).
    """
    if not (isinstance(n_r, (int, np.integer)) and n_r > 0):
        raise ValidationError(f"n_r must be a positive integer, got {n_r!r}")
    S = snapshots.states.T
    if S.shape[0] != sys.n:
        raise ValidationError(
            f"snapshot state dimension {S.shape[0]} does not match system dimension {sys.n}"
        )
    if block_structure:
        if sys.n % 4 != 0 or n_r % 4 != 0:
            raise ValidationError("block POD needs state and n_r divisible by 4")
        n_o = sys.n // 4
        pooled = np.hstack([S[i * n_o : (i + 1) * n_o, :] for i in range(4)])
        U, sigma, _ = np.linalg.svd(pooled, full_matrices=False)
        rank = int(np.count_nonzero(sigma > max(pooled.shape) * np.finfo(float).eps * sigma[0]))
        if n_r // 4 > rank:
            raise RankError(
                f"pooled snapshots have numerical rank {rank}; maximum n_r = {4 * rank}",
                max_rank=4 * rank,
            )
        blk = U[:, : n_r // 4]
        V = np.kron(np.eye(4), blk)
        proj = ProjectionPair(V=V, W=V, V_block=blk, W_block=blk, singular_values=sigma)
    else:
        U, sigma, _ = np.linalg.svd(S, full_matrices=False)
        rank = int(np.count_nonzero(sigma > max(S.shape) * np.finfo(float).eps * sigma[0]))
        if n_r > rank:
            raise RankError(
                f"snapshot matrix has numerical rank {rank}; requested n_r = {n_r}",
                max_rank=rank,
            )
        V = U[:, :n_r]
        proj = ProjectionPair(V=V, W=V, singular_values=sigma)
    return assemble_reduced(sys, proj, method="pod")


def simulate_reduced(
    model: ReducedQuadraticModel,
    u=None,
    x0_full=None,
    t_span=(0.0, 2.0),
    rtol: float = 1e-8,
    atol: float = 1e-10,
    output_grid: int = 201,
) -> Trajectory:
    """Integrate a reduced model and reconstruct full states and outputs.

    ``x0_full`` is the absolute lifted initial state of the scenario; the
    reduced initial condition is its projection W^T (x0_full - x0_nominal).
    Omitting it runs the nominal scenario (reduced state starts at zero).
    """
    if x0_full is None:
        xhat0 = np.zeros(model.n_r)
    else:
        x0_full = np.asarray(x0_full, dtype=float)
        if x0_full.shape != (model.n,):
            raise ValidationError(f"x0_full must have shape ({model.n},), got {x0_full.shape}")
        xhat0 = model.projections.W.T @ (x0_full - model.x0_full)
    u_fn = as_input(u, model.m)
    base = integrate(
        lambda t, xh: reduced_rhs(model, xh, u_fn(t)),
        xhat0,
        t_span=t_span,
        rtol=rtol,
        atol=atol,
        output_grid=output_grid,
    )
    states = model.x0_full + base.states @ model.projections.V.T
    outputs = model.y_offset + base.states @ model.C_r.T
    return Trajectory(
        times=base.times, states=states, outputs=outputs, stats=base.stats, kind="reduced"
    )


# -- model file round-trip ---------------------------------------------


def save_reduced_model(model: ReducedQuadraticModel, path, metadata: Optional[dict] = None) -> None:
    """Write a reduced model (with projections) as a structured text file."""
    doc = {
        "format": "gridmor-reduced-model",
        "version": 1,
        "method": model.method,
        "n": model.n,
        "n_r": model.n_r,
        "A_r": model.A_r.tolist(),
        "H_r_mode1": model.H_r.to_mode1().tolist(),
        "B_r": model.B_r.tolist(),
        "C_r": model.C_r.tolist(),
        "x0_full": model.x0_full.tolist(),
        "y_offset": model.y_offset.tolist(),
        "omega_s": None if model.omega_s is None else model.omega_s.tolist(),
        "V": model.projections.V.tolist(),
        "W": model.projections.W.tolist(),
        "metadata": dict(metadata or {}),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_reduced_model(path):
    """Read a model written by :func:`save_reduced_model`.

    Returns (model, metadata).
    """
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != "gridmor-reduced-model":
        raise ValidationError(f"{path}: not a reduced-model file")
    n_r = int(doc["n_r"])
    proj = ProjectionPair(V=np.array(doc["V"], dtype=float), W=np.array(doc["W"], dtype=float))
    model = ReducedQuadraticModel(
        A_r=np.array(doc["A_r"], dtype=float),
        H_r=DenseHessian(np.array(doc["H_r_mode1"], dtype=float).reshape(n_r, n_r, n_r)),
        B_r=np.array(doc["B_r"], dtype=float),
        C_r=np.array(doc["C_r"], dtype=float),
        projections=proj,
        x0_full=np.array(doc["x0_full"], dtype=float),
        y_offset=np.array(doc["y_offset"], dtype=float),
        method=doc["method"],
        omega_s=None if doc["omega_s"] is None else np.array(doc["omega_s"], dtype=float),
    )
    return model, doc.get("metadata", {})


# -- estimator API ------------------------------------------------------


class _ReducerBase(BaseEstimator):
    """Shared transform plumbing for fitted reducers."""

    def _fitted_model(self) -> ReducedQuadraticModel:
        if not hasattr(self, "model_"):
            raise NotFittedError(f"{type(self).__name__} is not fitted yet; call fit first")
        return self.model_

    def transform(self, X):
        """Map absolute lifted states (rows) to reduced coordinates."""
        model = self._fitted_model()
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        X2 = np.atleast_2d(X)
        if X2.shape[1] != model.n:
            raise ValidationError(f"states must have {model.n} columns, got {X2.shape[1]}")
        out = (X2 - model.x0_full) @ model.projections.W
        return out[0] if single else out

    def inverse_transform(self, Xr):
        """Reconstruct absolute lifted states from reduced coordinates."""
        model = self._fitted_model()
        Xr = np.asarray(Xr, dtype=float)
        single = Xr.ndim == 1
        X2 = np.atleast_2d(Xr)
        if X2.shape[1] != model.n_r:
            raise ValidationError(f"reduced states must have {model.n_r} columns, got {X2.shape[1]}")
        out = model.x0_full + X2 @ model.projections.V.T
        return out[0] if single else out


class BalancedTruncationReducer(_ReducerBase):
    """Balanced truncation of a shifted quadratic grid model.

    fit(system) computes truncated-series Gramians, square-root balancing
    of their frequency blocks, the reduced model, and (by default) the
    steady-state angle adjustment.  Attributes after fit: ``gramians_``,
    ``projections_``, ``singular_values_``, ``model_``,
    ``adjustment_error_`` (None, or the convergence error if the drift
    subsystem has no reachable steady state; the model is then kept
    unadjusted, which only matters on long horizons).
    """

    def __init__(
        self,
        n_reduced: int = 8,
        alpha: float = 5e-3,
        n_terms: int = 3,
        tau: float = MACHINE_TAU,
        adjust_steady_state: bool = True,
        ss_horizon: float = 100.0,
        ss_tol: float = 1e-8,
    ):
        self.n_reduced = n_reduced
        self.alpha = alpha
        self.n_terms = n_terms
        self.tau = tau
        self.adjust_steady_state = adjust_steady_state
        self.ss_horizon = ss_horizon
        self.ss_tol = ss_tol

    def fit(self, X: QuadraticSystem, y=None):
        config = GramianConfig(alpha=self.alpha, n_terms=self.n_terms, tau=self.tau)
        self.gramians_ = approx_gramians(X, config)
        proj = bt_projections(self.gramians_, self.n_reduced)
        model = assemble_reduced(X, proj, method="bt")
        self.adjustment_error_ = None
        if self.adjust_steady_state:
            try:
                model = steady_state_adjust(model, horizon=self.ss_horizon, tol=self.ss_tol)
            except ConvergenceError as exc:
                # grids whose relative dynamics never settles (persistent
                # collective rotation) have no drift constant to subtract
                logger.warning("steady-state adjustment skipped: %s", exc)
                self.adjustment_error_ = exc
        self.projections_ = proj
        self.singular_values_ = proj.singular_values
        self.model_ = model
        return self


class PODReducer(_ReducerBase):
    """POD Galerkin reduction of a shifted quadratic grid model.

    fit(system) simulates the nominal training scenario (zero initial
    condition, all-ones input) and takes the leading left singular
    directions of the snapshot matrix.  Attributes after fit:
    ``snapshots_``, ``projections_``, ``singular_values_``, ``model_``.
    """

    def __init__(
        self,
        n_reduced: int = 8,
        train_t_end: float = 2.0,
        train_samples: int = 201,
        rtol: float = 1e-8,
        atol: float = 1e-10,
        block_structure: bool = False,
    ):
        self.n_reduced = n_reduced
        self.train_t_end = train_t_end
        self.train_samples = train_samples
        self.rtol = rtol
        self.atol = atol
        self.block_structure = block_structure

    def fit(self, X: QuadraticSystem, y=None):
        snapshots = simulate_quadratic(
            X,
            t_span=(0.0, self.train_t_end),
            rtol=self.rtol,
            atol=self.atol,
            output_grid=self.train_samples,
        )
        model = pod_reduce(X, snapshots, self.n_reduced, block_structure=self.block_structure)
        self.snapshots_ = snapshots
        self.projections_ = model.projections
        self.singular_values_ = model.projections.singular_values
        self.model_ = model
        return self
