"""Original nonlinear oscillator model in first-order form.

This module is the reference truth the lifted and reduced models are
judged against: angles and frequency deviations evolve as

    delta_i' = omega_i
    omega_i' = -D_i/(2 J_i) * omega_i + omega_R/(2 J_i) * (F_i + f_i(delta))

with the sinusoidal coupling f_i computed by :func:`coupling_term`.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .netparams import NetworkParameters


@dataclass(frozen=True)
class SwingState:
    """Angles and frequency deviations of all oscillators."""

    delta: np.ndarray
    omega: np.ndarray

    def __post_init__(self):
        delta = np.asarray(self.delta, dtype=float)
        omega = np.asarray(self.omega, dtype=float)
        if delta.ndim != 1 or omega.shape != delta.shape:
            raise ValidationError(
                f"delta and omega must be 1-d with equal length, got {delta.shape} and {omega.shape}"
            )
        if not (np.all(np.isfinite(delta)) and np.all(np.isfinite(omega))):
            raise ValidationError("state contains non-finite entries")
        object.__setattr__(self, "delta", delta)
        object.__setattr__(self, "omega", omega)

    @property
    def n_o(self) -> int:
        return self.delta.shape[0]

    def pack(self) -> np.ndarray:
        """Flatten to [delta; omega] for integrators."""
        return np.concatenate([self.delta, self.omega])

    @classmethod
    def unpack(cls, y: np.ndarray) -> "SwingState":
        y = np.asarray(y, dtype=float)
        n = y.shape[0] // 2
        return cls(delta=y[:n], omega=y[n:])


def coupling_term(params: NetworkParameters, delta: np.ndarray) -> np.ndarray:
    """Sinusoidal network coupling f(delta).

    f_i = -sum_{j != i} K_ij * sin(delta_i - delta_j - gamma_ij).
    The diagonal contributes sin(0) * 0 and needs no masking.
    """
    delta = np.asarray(delta, dtype=float)
    if delta.shape != (params.n_o,):
        raise ValidationError(f"delta must have shape ({params.n_o},), got {delta.shape}")
    diff = delta[:, None] - delta[None, :] - params.gamma
    return -np.sum(params.K * np.sin(diff), axis=1)


def swing_rhs(params: NetworkParameters, state: SwingState) -> SwingState:
    """Time derivative of the oscillator state."""
    d, w = _swing_rhs_arrays(params, state.delta, state.omega)
    return SwingState(delta=d, omega=w)


def _swing_rhs_arrays(params, delta, omega):
    half_J = 2.0 * params.J
    dot_omega = -params.D / half_J * omega + params.omega_R / half_J * (
        params.F + coupling_term(params, delta)
    )
    return omega, dot_omega


def swing_ode(params: NetworkParameters):
    """Right-hand side ``f(t, y)`` over packed states, for integrators."""
    n = params.n_o

    def f(t, y):
        d, w = _swing_rhs_arrays(params, y[:n], y[n:])
        return np.concatenate([d, w])

    return f
