"""Truncated-series low-rank approximation of the quadratic system Gramians.

The reachability and observability Gramians of the shifted quadratic system
are expanded as series P = sum_i P_i, Q = sum_i Q_i whose terms satisfy a
chain of Lyapunov equations.  The leading equations have right-hand sides
B B^T and C^T C; each later odd term's right-hand side is built from
quadratic-tensor contractions of earlier factors.  Even-index terms vanish
identically, so the iteration visits i = 1, 3, 5, ...  All quantities are
kept as low-rank factors compressed after every concatenation.

A small stabilizing shift alpha moves the lifted system's zero eigenvalues
(from the angle columns) into the open left half-plane; it is applied only
inside this module.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import StabilityError, ValidationError
from .lift import QuadraticSystem, kron_factor_product
from .lyap import MACHINE_TAU, LowRankFactor, solve_lyapunov_lr, truncate_lr

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GramianConfig:
    """Series truncation settings: shift alpha, odd order n_terms, SVD tau."""

    alpha: float = 5e-3
    n_terms: int = 3
    tau: float = MACHINE_TAU

    def __post_init__(self):
        if not self.alpha > 0.0:
            raise ValidationError(f"alpha must be > 0, got {self.alpha!r}")
        if not (isinstance(self.n_terms, int) and self.n_terms >= 1 and self.n_terms % 2 == 1):
            raise ValidationError(f"n_terms must be an odd integer >= 1, got {self.n_terms!r}")
        if self.tau < 0.0:
            raise ValidationError(f"tau must be >= 0, got {self.tau!r}")


@dataclass(frozen=True)
class GramianPair:
    """Low-rank factors of the truncated-series Gramians.

    P_factor stacks the reachability chain (P_T = P_factor @ P_factor.T)
    and Q_factor the observability chain.  ``term_stats`` records, per
    series term, the factor ranks and Lyapunov residuals for diagnostics.
    """

    P_factor: LowRankFactor
    Q_factor: LowRankFactor
    config: GramianConfig
    term_stats: tuple = ()

    def __post_init__(self):
        if self.P_factor.n != self.Q_factor.n:
            raise ValidationError(
                f"factor row counts differ: {self.P_factor.n} vs {self.Q_factor.n}"
            )

    @property
    def n(self) -> int:
        return self.P_factor.n


def _stack(chain: LowRankFactor, new: np.ndarray, tau: float) -> LowRankFactor:
    if new.shape[1] == 0:
        return chain
    return truncate_lr(np.column_stack([chain.factor, new]), tau)


def approx_gramians(sys: QuadraticSystem, config: GramianConfig = GramianConfig()) -> GramianPair:
    """Truncated-series Gramian factors of a shifted quadratic system.

    Requires a zero initial condition (shift first) and that A - alpha*I is
    Hurwitz.  Per-term diagnostics (ranks, Lyapunov residuals) are emitted
    as structured log records on this module's logger.
    """
    if sys.n == 0:
        raise ValueError("system dimension must be positive")
    if np.any(sys.x0 != 0.0):
        raise ValidationError(
            "gramian series requires a zero initial condition; apply shift_system first"
        )
    A_alpha = sys.A - config.alpha * np.eye(sys.n)
    tau = config.tau
    try:
        R1 = solve_lyapunov_lr(A_alpha, sys.B, tau=tau)
        S1 = solve_lyapunov_lr(A_alpha, sys.C.T, transpose=True, tau=tau)
    except StabilityError as exc:
        raise StabilityError(
            f"shifted matrix A - alpha*I is not Hurwitz with alpha={config.alpha:g}; "
            f"increase alpha ({exc})"
        ) from exc
    logger.info(
        "gramian term i=1 P_rank=%d Q_rank=%d P_residual=%.3e Q_residual=%.3e",
        R1.rank, S1.rank, R1.residual, S1.residual,
    )
    stats = [
        {
            "term": 1,
            "P_rank": R1.rank,
            "Q_rank": S1.rank,
            "P_residual": R1.residual,
            "Q_residual": S1.residual,
        }
    ]
    R = {1: R1}
    S = {1: S1}
    P_chain = R1
    Q_chain = S1
    for i in range(3, config.n_terms + 1, 2):
        # right-hand-side factors accumulated over the inner chain; even
        # split indices would need even-order factors, which are zero
        K_chain = None
        L_chain = None
        for k in range(1, i - 1, 2):
            Rk = R[k].factor
            Rrem = R[i - k - 1].factor
            Srem = S[i - k - 1].factor
            if sys.H is None:
                dK = np.zeros((sys.n, 0))
                dL = np.zeros((sys.n, 0))
            else:
                dK = kron_factor_product(sys.H, 1, Rk, Rrem)
                dL = kron_factor_product(sys.H, 2, Rk, Srem)
            K_chain = truncate_lr(dK if K_chain is None else np.column_stack([K_chain.factor, dK]), tau)
            L_chain = truncate_lr(dL if L_chain is None else np.column_stack([L_chain.factor, dL]), tau)
        Ri = solve_lyapunov_lr(A_alpha, K_chain.factor, tau=tau)
        Si = solve_lyapunov_lr(A_alpha, L_chain.factor, transpose=True, tau=tau)
        logger.info(
            "gramian term i=%d P_rank=%d Q_rank=%d P_residual=%.3e Q_residual=%.3e",
            i, Ri.rank, Si.rank, Ri.residual, Si.residual,
        )
        stats.append(
            {
                "term": i,
                "P_rank": Ri.rank,
                "Q_rank": Si.rank,
                "P_residual": Ri.residual,
                "Q_residual": Si.residual,
            }
        )
        R[i] = Ri
        S[i] = Si
        P_chain = _stack(P_chain, Ri.factor, tau)
        Q_chain = _stack(Q_chain, Si.factor, tau)
    logger.info(
        "gramian series done n_terms=%d alpha=%g P_rank=%d Q_rank=%d",
        config.n_terms, config.alpha, P_chain.rank, Q_chain.rank,
    )
    return GramianPair(
        P_factor=P_chain, Q_factor=Q_chain, config=config, term_stats=tuple(stats)
    )
