"""Density-matrix estimation by pattern-function averages.

For ``j >= k`` and ``j + k < N``::

    rho_hat[j, k] = (1/n) sum_l f_jk(Y_l / sqrt(eta)) exp(i (j - k) Phi_l)

with the regime-dependent pattern functions of :mod:`qhtomo.pattern`.  The
angle sign is the one that makes the pattern functions biorthogonal to the
quadrature densities of :mod:`qhtomo.forward` (``pattern.ANGLE_SIGN``).
"""
from __future__ import annotations

from dataclasses import dataclass, field
import json
import math
from pathlib import Path
from typing import Optional, Tuple

import numpy as np
from scipy.optimize import brentq

from .errors import QhtomoError, TuningError
from .forward import NoiseModel
from .pattern import ANGLE_SIGN, PatternTable, Regime, table_pairs
from .sampler import Dataset
from .state import DensityMatrix, StateClass

ROOT_XTOL = 1e-14
#: slack for flooring solutions that land a rounding error below an integer
FLOOR_SLACK = 1e-9


def _round_down(N_real: float) -> int:
    return max(1, int(math.floor(N_real * (1.0 + FLOOR_SLACK))))


@dataclass
class DmTuning:
    """Truncation ``N`` (estimate all ``j + k < N``) and, for ``eta <= 1/2``, cut-off ``delta``.

    ``N_real`` and ``inv_delta_real`` are the unrounded solutions; ``residuals``
    are the defining-equation residuals evaluated there.
    """

    N: int
    delta: Optional[float] = None
    residuals: Tuple[float, ...] = ()
    N_real: Optional[float] = None
    inv_delta_real: Optional[float] = None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.N < 1:
            raise ValueError(f"N must be positive, got {self.N}")
        if self.delta is not None:
            if not self.delta > 0:
                raise ValueError("delta must be positive")
            if 1.0 / self.delta < 2.0 * math.sqrt(self.N) * (1 - 1e-12):
                raise ValueError(f"1/delta = {1 / self.delta:.6g} below 2 sqrt(N) = {2 * math.sqrt(self.N):.6g}")

    def regime(self, eta: float) -> Regime:
        if eta <= 0.5 and self.delta is None:
            raise ValueError(f"eta = {eta} needs a cut-off delta")
        if eta > 0.5 and self.delta is not None:
            raise ValueError(f"delta is only used for eta <= 1/2, got eta = {eta}")
        return Regime.for_eta(eta, self.delta)

    def to_dict(self) -> dict:
        return {
            "N": self.N,
            "delta": self.delta,
            "N_real": self.N_real,
            "inv_delta_real": self.inv_delta_real,
            "residuals": list(self.residuals),
            "diagnostics": self.diagnostics,
        }


def _check_table(data: Dataset, tuning: DmTuning, table: PatternTable) -> Regime:
    regime = tuning.regime(data.eta)
    if table.regime != regime:
        raise ValueError(f"table regime {table.regime} does not match data/tuning regime {regime}")
    if tuning.N > table.N:
        raise ValueError(f"tuning N = {tuning.N} exceeds table N = {table.N}")
    return regime


def estimate_dm(data: Dataset, tuning: DmTuning, table: PatternTable) -> DensityMatrix:
    """Raw (Hermitian, possibly unphysical) estimate of size ``N x N``."""
    if data.n == 0:
        raise ValueError("empty dataset")
    _check_table(data, tuning, table)
    N = tuning.N
    pairs = table_pairs(N)
    x = data.y / math.sqrt(data.eta)
    vals = table.lookup_rows([table.row(j, k) for j, k in pairs], x)
    out = np.zeros((N, N), dtype=complex)
    for r, (j, k) in enumerate(pairs):
        a = j - k
        if a == 0:
            out[j, k] = np.sum(vals[r]) / data.n
        else:
            phase = ANGLE_SIGN * a * data.phi
            re = np.sum(vals[r] * np.cos(phase)) / data.n
            im = np.sum(vals[r] * np.sin(phase)) / data.n
            out[j, k] = complex(re, im)
            out[k, j] = complex(re, -im)
    return DensityMatrix(
        out,
        raw=True,
        label="estimate",
        meta={"tuning": tuning.to_dict(), "n": data.n, "eta": data.eta},
    )


def estimate_to_dict(rho: DensityMatrix, tuning: DmTuning, diagnostics: Optional[dict] = None) -> dict:
    d = rho.to_dict()
    d["raw"] = rho.raw
    d["tuning"] = {"N": tuning.N, "delta": tuning.delta}
    d["diagnostics"] = dict(tuning.diagnostics, **(diagnostics or {}))
    d["diagnostics"]["residuals"] = list(tuning.residuals)
    return d


def save_estimate(rho: DensityMatrix, tuning: DmTuning, path, diagnostics: Optional[dict] = None) -> None:
    Path(path).write_text(json.dumps(estimate_to_dict(rho, tuning, diagnostics), indent=1))


# -- projection ------------------------------------------------------------------

def _simplex_projection(lam: np.ndarray) -> np.ndarray:
    """Euclidean projection of a vector onto the probability simplex."""
    mu = np.sort(lam)[::-1]
    cums = np.cumsum(mu) - 1.0
    idx = np.arange(1, lam.size + 1)
    rho = int(np.nonzero(mu - cums / idx > 0)[0][-1])
    return np.clip(lam - cums[rho] / (rho + 1), 0.0, None)


def project_physical(raw: DensityMatrix) -> Tuple[DensityMatrix, float]:
    """Nearest physical state in Hilbert-Schmidt distance.

    Eigenvalues are shifted by a common constant and clipped at zero so that
    they sum to one (the Euclidean projection onto the simplex); a matrix that
    only needs clipping and rescaling is not always mapped to its nearest state
    that way.  Returns the physical state and the distance moved.
    """
    a = raw.entries if isinstance(raw, DensityMatrix) else np.asarray(raw, dtype=complex)
    a = 0.5 * (a + a.conj().T)
    if not np.any(a):
        raise QhtomoError("projection: zero matrix has no defined direction")
    lam, vec = np.linalg.eigh(a)
    lam = _simplex_projection(lam)
    proj = (vec * lam) @ vec.conj().T
    moved = float(np.linalg.norm(proj - a))
    label = raw.label if isinstance(raw, DensityMatrix) else ""
    return DensityMatrix(proj, raw=False, label=label, meta={"projection_distance": moved}), moved


# -- tuning ------------------------------------------------------------------------

def _grow_bracket(f, lo, hi, limit=1e12):
    f_lo = f(lo)
    f_hi = f(hi)
    while f_lo * f_hi > 0:
        if hi > limit:
            raise TuningError(f"no sign change on [{lo:.6g}, {hi:.6g}]")
        hi *= 2.0
        f_hi = f(hi)
    return lo, hi


def _weak_noise(n: float, noise: NoiseModel, cls: StateClass) -> DmTuning:
    L = math.log(n)
    g = noise.gamma
    B, r = cls.B, cls.r
    if noise.eta == 1.0:
        N_real = (L / (2.0 * B)) ** (2.0 / r)
        resid = 2.0 * B * N_real ** (r / 2.0) - L
        rule = "noiseless closed form"
    elif r == 2:
        N_real = L / (2.0 * (4.0 * g + B)) * (1.0 + (2.0 / 3.0) * math.log(L) / L)
        resid = 0.0
        rule = "amplified closed form (r = 2)"
    else:
        def eq(N):
            return 8.0 * g * N + 2.0 * B * N ** (r / 2.0) - L

        lo, hi = _grow_bracket(eq, 0.0, max(1.0, L))
        N_real = brentq(eq, lo, hi, xtol=ROOT_XTOL)
        resid = eq(N_real)
        rule = "amplified root of 8 gamma N + 2 B N^(r/2) = log n"
    N = _round_down(N_real)
    return DmTuning(N, None, (float(resid),), N_real, None, {"rule": rule})


def strong_noise_equations(u: float, N: float, n: float, noise: NoiseModel, cls: StateClass) -> Tuple[float, float]:
    """Residuals of the two equations defining ``(N, 1/delta)`` for ``eta <= 1/2``.

    ``u`` stands for ``1/delta``.
    """
    L = math.log(n)
    ll = math.log(L)
    g, B, r, beta = noise.gamma, cls.B, cls.r, cls.beta
    gap = 0.5 * (u - 2.0 * math.sqrt(N)) ** 2
    if r < 2:
        common = 2.0 * beta * (u / 2.0) ** r + gap
        return (common + 2.0 * g * u * u - L, common - 2.0 * B * N ** (r / 2.0) - ll * ll)
    e1 = (beta + 4.0 * g) / 2.0 * u * u + gap - (5.0 / 3.0) * math.log(N) - L
    e2 = beta / 2.0 * u * u + gap - 2.0 * B * N - 3.0 * math.log(N)
    return e1, e2


def _strong_noise(n: float, noise: NoiseModel, cls: StateClass) -> DmTuning:
    # Subtracting the two equations leaves a relation that is monotone in N;
    # N(u) is eliminated exactly and the remaining scalar equation is solved by bisection.
    L = math.log(n)
    ll = math.log(L)
    g, B, r = noise.gamma, cls.B, cls.r

    if r < 2:
        budget = L - ll * ll
        if budget <= 0:
            raise TuningError(f"log n - (log log n)^2 = {budget:.4g} <= 0 for n = {n}; no admissible (N, delta)")
        u_cap = math.sqrt(budget / (2.0 * g))

        def N_of(u):
            return (max(budget - 2.0 * g * u * u, 0.0) / (2.0 * B)) ** (2.0 / r)

    else:
        def N_of(u):
            rhs = L - 2.0 * g * u * u

            def eq(logN):
                return 2.0 * B * math.exp(logN) + (4.0 / 3.0) * logN - rhs

            lo, hi = -1.0, 1.0
            while eq(lo) > 0:
                lo *= 2.0
            while eq(hi) < 0:
                hi *= 2.0
            return math.exp(brentq(eq, lo, hi, xtol=1e-15))

        u_cap = None

    def feasibility(u):
        return u - 2.0 * math.sqrt(N_of(u))

    def second(u):
        return strong_noise_equations(u, N_of(u), n, noise, cls)[1]

    hi = u_cap if u_cap is not None else 1.0
    if u_cap is None:
        while feasibility(hi) <= 0:
            hi *= 2.0
    u0 = brentq(feasibility, 0.0, hi, xtol=ROOT_XTOL)
    if u_cap is not None:
        lo, up = u0, u_cap
        if second(lo) * second(up) > 0:
            raise TuningError(f"no root of the cut-off system for 1/delta in [{lo:.6g}, {up:.6g}]")
    else:
        scanned = [u0]
        lo, up = u0 * (1 + 1e-9), u0 + 0.25
        while second(lo) * second(up) > 0:
            lo, up = up, up + 0.25
            scanned.append(up)
            if up > 1e3:
                raise TuningError(f"no root of the cut-off system for 1/delta in [{u0:.6g}, {up:.6g}]")
    u = brentq(second, lo, up, xtol=ROOT_XTOL, rtol=4 * np.finfo(float).eps)
    N_real = N_of(u)
    residuals = strong_noise_equations(u, N_real, n, noise, cls)
    N = _round_down(N_real)
    diagnostics = {"rule": f"cut-off system ({'r < 2' if r < 2 else 'r = 2'})"}
    inv_delta = u
    if u < 2.0 * math.sqrt(N):
        inv_delta = 2.0 * math.sqrt(N)
        diagnostics["clipped_inv_delta"] = {"from": u, "to": inv_delta}
    return DmTuning(N, 1.0 / inv_delta, tuple(float(v) for v in residuals), N_real, u, diagnostics)


def select_tuning(n: float, noise: NoiseModel, cls: StateClass) -> DmTuning:
    """Truncation (and cut-off) minimizing the risk bound for class ``cls``.

    ``n`` may be any real sample size ``>= 3``.
    """
    if n < 3:
        raise ValueError(f"n must be at least 3 (log log n), got {n}")
    if noise.eta > 0.5:
        return _weak_noise(n, noise, cls)
    return _strong_noise(n, noise, cls)
