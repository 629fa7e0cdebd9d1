"""Oscillator-network parameters: validation, file round-trip, synthesis.

A grid model is fixed by per-oscillator inertia J, damping D, constant
power drive F, the reference angular frequency omega_R, and dense
coupling tables K (strength) and gamma (phase shift) with zero diagonals.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterFileError, ValidationError

_TOP_LEVEL_KEYS = ("omega_R", "n_o", "J", "D", "F", "couplings")
_COUPLING_KEYS = ("i", "j", "K", "gamma")


def _as_vector(name, value, n):
    v = np.asarray(value, dtype=float)
    if v.shape != (n,):
        raise ValidationError(f"{name} must have shape ({n},), got {v.shape}")
    if not np.all(np.isfinite(v)):
        bad = int(np.flatnonzero(~np.isfinite(v))[0]) + 1
        raise ValidationError(f"{name}[{bad}] is not finite")
    return v


@dataclass(frozen=True)
class NetworkParameters:
    """Constants of a coupled-oscillator grid model.

    Attributes
    ----------
    omega_R : float
        Reference angular frequency in rad/s.
    J, D, F : ndarray, shape (n_o,)
        Inertia (strictly positive), damping (nonnegative), and constant
        drive per oscillator.
    K, gamma : ndarray, shape (n_o, n_o)
        Coupling strength and phase shift; both have zero diagonals.
    """

    omega_R: float
    J: np.ndarray
    D: np.ndarray
    F: np.ndarray
    K: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        J = np.asarray(self.J, dtype=float)
        if J.ndim != 1 or J.size == 0:
            raise ValidationError("J must be a nonempty 1-d array")
        n = J.size
        if not np.all(np.isfinite(J)):
            raise ValidationError("J contains non-finite entries")
        if np.any(J <= 0.0):
            bad = int(np.flatnonzero(J <= 0.0)[0]) + 1
            raise ValidationError(f"J[{bad}] = {J[bad - 1]:g} must be > 0")
        D = _as_vector("D", self.D, n)
        if np.any(D < 0.0):
            bad = int(np.flatnonzero(D < 0.0)[0]) + 1
            raise ValidationError(f"D[{bad}] = {D[bad - 1]:g} must be >= 0")
        F = _as_vector("F", self.F, n)
        omega_R = float(self.omega_R)
        if not (math.isfinite(omega_R) and omega_R > 0.0):
            raise ValidationError(f"omega_R = {omega_R!r} must be finite and > 0")
        K = np.asarray(self.K, dtype=float)
        gamma = np.asarray(self.gamma, dtype=float)
        for name, M in (("K", K), ("gamma", gamma)):
            if M.shape != (n, n):
                raise ValidationError(f"{name} must have shape ({n}, {n}), got {M.shape}")
            if not np.all(np.isfinite(M)):
                raise ValidationError(f"{name} contains non-finite entries")
            if np.any(np.diag(M) != 0.0):
                bad = int(np.flatnonzero(np.diag(M) != 0.0)[0]) + 1
                raise ValidationError(f"{name}[{bad},{bad}] must be 0")
        # freeze the arrays so a parameter set cannot drift after validation
        for name, arr in (("J", J), ("D", D), ("F", F), ("K", K), ("gamma", gamma)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "omega_R", omega_R)

    @property
    def n_o(self) -> int:
        """Number of oscillators."""
        return self.J.shape[0]


def load_parameters(path) -> NetworkParameters:
    """Read a parameter file, rejecting unknown keys and bad records.

    Raises
    ------
    ParameterFileError
        On parse errors (with line/column), unknown or missing keys,
        out-of-range oscillator indices, or duplicate coupling records.
    """
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParameterFileError(
                f"{path}: parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}"
            ) from exc
    if not isinstance(raw, dict):
        raise ParameterFileError(f"{path}: top level must be an object")
    unknown = sorted(set(raw) - set(_TOP_LEVEL_KEYS))
    if unknown:
        raise ParameterFileError(f"{path}: unknown key(s): {', '.join(unknown)}")
    missing = [k for k in _TOP_LEVEL_KEYS if k not in raw]
    if missing:
        raise ParameterFileError(f"{path}: missing key(s): {', '.join(missing)}")
    n = raw["n_o"]
    if not isinstance(n, int) or isinstance(n, bool) or n < 1:
        raise ParameterFileError(f"{path}: n_o must be a positive integer, got {n!r}")
    records = raw["couplings"]
    if not isinstance(records, list):
        raise ParameterFileError(f"{path}: couplings must be a list")
    K = np.zeros((n, n))
    gamma = np.zeros((n, n))
    seen = set()
    for r, rec in enumerate(records, start=1):
        if not isinstance(rec, dict):
            raise ParameterFileError(f"{path}: couplings[{r}] must be an object")
        unknown = sorted(set(rec) - set(_COUPLING_KEYS))
        if unknown:
            raise ParameterFileError(
                f"{path}: couplings[{r}]: unknown key(s): {', '.join(unknown)}"
            )
        missing = [k for k in _COUPLING_KEYS if k not in rec]
        if missing:
            raise ParameterFileError(
                f"{path}: couplings[{r}]: missing key(s): {', '.join(missing)}"
            )
        i, j = rec["i"], rec["j"]
        for label, idx in (("i", i), ("j", j)):
            if not isinstance(idx, int) or isinstance(idx, bool) or not 1 <= idx <= n:
                raise ParameterFileError(
                    f"{path}: couplings[{r}]: {label} = {idx!r} out of range 1..{n}"
                )
        if i == j:
            raise ParameterFileError(f"{path}: couplings[{r}]: i == j == {i} (self-coupling)")
        if (i, j) in seen:
            raise ParameterFileError(f"{path}: couplings[{r}]: duplicate pair ({i}, {j})")
        seen.add((i, j))
        K[i - 1, j - 1] = float(rec["K"])
        gamma[i - 1, j - 1] = float(rec["gamma"])
    try:
        return NetworkParameters(
            omega_R=raw["omega_R"], J=raw["J"], D=raw["D"], F=raw["F"], K=K, gamma=gamma
        )
    except ValidationError as exc:
        raise ParameterFileError(f"{path}: {exc}") from exc


def save_parameters(params: NetworkParameters, path) -> None:
    """Write ``params`` so that :func:`load_parameters` round-trips bit-exactly.

    Coupling records are emitted in row-major (i, then j) order; a pair is
    recorded whenever K or gamma is nonzero there.
    """
    couplings = []
    n = params.n_o
    for i in range(n):
        for j in range(n):
            if i != j and (params.K[i, j] != 0.0 or params.gamma[i, j] != 0.0):
                couplings.append(
                    {
                        "i": i + 1,
                        "j": j + 1,
                        "K": params.K[i, j],
                        "gamma": params.gamma[i, j],
                    }
                )
    doc = {
        "omega_R": params.omega_R,
        "n_o": n,
        "J": params.J.tolist(),
        "D": params.D.tolist(),
        "F": params.F.tolist(),
        "couplings": couplings,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def synth_grid(n_o: int, seed: int = 0, connectivity: float = 1.0) -> NetworkParameters:
    """Draw a random, reproducible grid model.

    Inertia J ~ U[0.5, 2], damping D ~ U[0.1, 1], drive F ~ U[-1, 1]
    recentred to sum to zero, symmetric coupling pattern with strengths
    K ~ U[0.5, 2] and phase shifts gamma ~ U[-0.3, 0.3]; each undirected
    pair is present with probability ``connectivity``.  omega_R is the
    60 Hz reference, 2*pi*60 rad/s.
    """
    if not isinstance(n_o, int) or isinstance(n_o, bool) or n_o < 1:
        raise ValueError(f"n_o must be a positive integer, got {n_o!r}")
    if not 0.0 < connectivity <= 1.0:
        raise ValueError(f"connectivity must be in (0, 1], got {connectivity!r}")
    rng = np.random.default_rng(seed)
    J = rng.uniform(0.5, 2.0, n_o)
    D = rng.uniform(0.1, 1.0, n_o)
    F = rng.uniform(-1.0, 1.0, n_o)
    F -= F.mean()
    K = np.zeros((n_o, n_o))
    gamma = np.zeros((n_o, n_o))
    iu, ju = np.triu_indices(n_o, k=1)
    present = rng.random(iu.size) < connectivity
    strength = rng.uniform(0.5, 2.0, iu.size)
    shift = rng.uniform(-0.3, 0.3, iu.size)
    K[iu, ju] = np.where(present, strength, 0.0)
    gamma[iu, ju] = np.where(present, shift, 0.0)
    K += K.T
    gamma += gamma.T
    return NetworkParameters(omega_R=2.0 * math.pi * 60.0, J=J, D=D, F=F, K=K, gamma=gamma)
