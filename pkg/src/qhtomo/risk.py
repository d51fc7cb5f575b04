"""Monte-Carlo risk of the estimators and numeric checks of the decay bounds.

MISE cells are decomposed from the same replicates as ``b1^2 + b2^2 + sigma^2``:
truncation bias (known from the truth), squared bias of the replicate mean and
the replicate variance with ``ddof = 0``, so the identity is exact up to rounding.
"""
from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field
import json
import math
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .dm_estimator import DmTuning, estimate_dm, select_tuning
from .errors import NumericalError
from .forward import NoiseModel, quadrature_density, wigner_eval, wigner_ft
from .pattern import PatternTable, Regime, build_table, pattern_eval_many, table_pairs
from .sampler import build_envelope, sample
from .specfun import FOURIER_SCALE, envelope_bound, wigner_envelope
from .state import DensityMatrix, StateClass, class_check, hs_norm_sq
from ._quad import gl_panels
from .wigner_estimator import (
    WignerTuning,
    build_kernel_table,
    estimate_wigner,
    select_wigner_tuning,
)

LEMMA_TOL = 1e-12


def replication_seeds(master_seed: int, R: int) -> List[int]:
    """Deterministic per-replication seeds derived from ``master_seed``."""
    state = np.random.SeedSequence(master_seed).generate_state(R, dtype=np.uint64)
    return [int(s) for s in state]


@dataclass
class RiskCell:
    n: int
    replications: int
    mise_mean: float
    mise_sd: float
    b1_sq: float
    b2_sq: float
    sigma_sq: float
    tuning: dict = field(default_factory=dict)

    @property
    def mise_se(self) -> float:
        return self.mise_sd / math.sqrt(self.replications)

    @property
    def decomposition_gap(self) -> float:
        return self.mise_mean - (self.b1_sq + self.b2_sq + self.sigma_sq)


@dataclass
class RateFit:
    slope: float
    intercept: float
    r_squared: float
    predictor: str


@dataclass
class RiskReport:
    estimator_kind: str
    cells: List[RiskCell]
    rate_fit: Optional[RateFit] = None

    def __post_init__(self):
        if self.estimator_kind not in ("dm", "wigner"):
            raise ValueError(f"unknown estimator kind {self.estimator_kind!r}")

    def to_dict(self) -> dict:
        return {
            "estimator_kind": self.estimator_kind,
            "cells": [asdict(c) for c in self.cells],
            "rate_fit": asdict(self.rate_fit) if self.rate_fit else None,
        }

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    def to_csv(self, path) -> None:
        cols = ["n", "replications", "mise_mean", "mise_sd", "b1_sq", "b2_sq", "sigma_sq"]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(cols)
            for c in self.cells:
                writer.writerow([repr(getattr(c, k)) for k in cols])


def _check_reps(R: int):
    if R < 2:
        raise ValueError(f"need at least 2 replications, got {R}")


# -- density matrix -----------------------------------------------------------------

def truncation_bias_sq(truth: DensityMatrix, N: int) -> float:
    """``sum_{j + k >= N} |rho_jk|^2``."""
    j, k = np.indices(truth.entries.shape)
    return float(np.sum(np.abs(truth.entries[j + k >= N]) ** 2))


def dm_mise(
    truth: DensityMatrix,
    n: int,
    R: int,
    noise: NoiseModel,
    tuning: DmTuning,
    seed: int = 0,
    table: Optional[PatternTable] = None,
    threads: int = 1,
) -> RiskCell:
    """MISE of the pattern-function estimator over ``R`` independent datasets."""
    _check_reps(R)
    regime = tuning.regime(noise.eta)
    if table is None or table.regime != regime or table.N < tuning.N:
        table = build_table(tuning.N, regime)
    N = tuning.N
    mask = np.add.outer(np.arange(N), np.arange(N)) < N
    ref = truth.padded(N)
    b1 = truncation_bias_sq(truth, N)
    env = build_envelope(truth)
    est = np.empty((R, N, N), dtype=complex)
    for r, s in enumerate(replication_seeds(seed, R)):
        data = sample(truth, noise, n, seed=s, threads=threads, envelope=env)
        est[r] = estimate_dm(data, tuning, table).entries
    err = np.abs(est - ref) ** 2
    dist = b1 + np.sum(np.where(mask, err, 0.0), axis=(1, 2))
    mean = est.mean(axis=0)
    b2 = float(np.sum(np.abs(mean - ref)[mask] ** 2))
    var = np.mean(np.abs(est - mean) ** 2, axis=0)
    sigma = float(np.sum(var[mask]))
    return RiskCell(n, R, float(dist.mean()), float(dist.std(ddof=1)), b1, b2, sigma, tuning.to_dict())


# -- Wigner function -------------------------------------------------------------------

def wigner_tail_l2_sq(truth, radius: float, extent: float = 14.0) -> float:
    """``int_{|z| > radius} W_rho^2`` by polar quadrature."""
    d = truth.dim if isinstance(truth, DensityMatrix) else np.asarray(truth).shape[0]
    r, wr = gl_panels(radius, radius + extent, 32, 16)
    n_theta = 4 * d + 16
    theta = 2.0 * math.pi * np.arange(n_theta) / n_theta
    vals = wigner_eval(truth, r[:, None] * np.cos(theta), r[:, None] * np.sin(theta))
    return float(np.sum((vals**2).mean(axis=1) * 2.0 * math.pi * r * wr))


def wigner_mise(
    truth: DensityMatrix,
    n: int,
    R: int,
    noise: NoiseModel,
    tuning: WignerTuning,
    seed: int = 0,
    step: Optional[float] = None,
    threads: int = 1,
) -> RiskCell:
    """MISE of the truncated kernel estimator; the outside-disc term is ``||W_rho||^2`` beyond ``s_n``."""
    _check_reps(R)
    env = build_envelope(truth)
    tail = wigner_tail_l2_sq(truth, tuning.s_n)
    grids = []
    table = None
    for s in replication_seeds(seed, R):
        data = sample(truth, noise, n, seed=s, threads=threads, envelope=env)
        grid = estimate_wigner(data, tuning, step=step, threads=threads, table=table)
        grids.append(grid.values)
        if table is None:
            reach = tuning.s_n + 12.0
            table = build_kernel_table(tuning.h, noise, reach)
    q, p = grid.mesh()
    mask = grid.disc_mask()
    cell = grid.step**2
    w_true = np.where(mask, wigner_eval(truth, q, p), 0.0)
    stack = np.stack(grids)
    dist = tail + np.sum((stack - w_true) ** 2, axis=(1, 2)) * cell
    mean = stack.mean(axis=0)
    b2 = float(np.sum((mean - w_true) ** 2) * cell)
    sigma = float(np.sum(stack.var(axis=0)) * cell)
    return RiskCell(n, R, float(dist.mean()), float(dist.std(ddof=1)), tail, b2, sigma, tuning.to_dict())


# -- rate curves -----------------------------------------------------------------------------

def fit_rate(cells: Sequence[RiskCell], predictor: str = "log_n", r: float = 2.0) -> RateFit:
    """Least-squares line of ``log(mise)`` against ``log n`` or ``N(n)^(r/2)``."""
    mise = np.array([c.mise_mean for c in cells])
    if predictor == "log_n":
        x = np.log([c.n for c in cells])
    elif predictor == "N_power":
        x = np.array([c.tuning["N_real"] ** (r / 2.0) for c in cells])
    else:
        raise ValueError(f"unknown predictor {predictor!r}")
    if len(cells) < 2 or np.ptp(x) == 0 or np.any(mise <= 0) or not np.all(np.isfinite(mise)):
        raise NumericalError("degenerate rate fit")
    y = np.log(mise)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    tot = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - float(np.sum(resid**2) / tot) if tot > 0 else 1.0
    return RateFit(float(slope), float(intercept), r2, predictor)


def rate_curve(
    truth: DensityMatrix,
    ns: Sequence[int],
    R: int,
    noise: NoiseModel,
    cls: StateClass,
    kind: str = "dm",
    predictor: str = "log_n",
    seed: int = 0,
    threads: int = 1,
    wigner_step: Optional[float] = None,
) -> RiskReport:
    """MISE cells over several sample sizes with theory-driven tuning, plus a log-linear fit."""
    if len(ns) < 3:
        raise ValueError("a rate curve needs at least 3 sample sizes")
    cells = []
    tables: Dict[Tuple[int, Regime], PatternTable] = {}
    for i, n in enumerate(ns):
        cell_seed = replication_seeds(seed, len(ns))[i]
        if kind == "dm":
            tuning = select_tuning(n, noise, cls)
            regime = tuning.regime(noise.eta)
            key = (tuning.N, regime)
            if key not in tables:
                tables[key] = build_table(tuning.N, regime)
            cells.append(dm_mise(truth, n, R, noise, tuning, seed=cell_seed, table=tables[key], threads=threads))
        elif kind == "wigner":
            tuning = select_wigner_tuning(n, noise, cls)
            cells.append(wigner_mise(truth, n, R, noise, tuning, seed=cell_seed, step=wigner_step, threads=threads))
        else:
            raise ValueError(f"unknown estimator kind {kind!r}")
    return RiskReport(kind, cells, fit_rate(cells, predictor, cls.r))


# -- bound checks ------------------------------------------------------------------------------

@dataclass
class LemmaReport:
    name: str
    passed: bool
    checked: int
    violations: int
    worst_margin: float
    details: dict = field(default_factory=dict)


def laguerre_bound_check(m_max: int = 25, dz: float = 0.01, perturb: float = 1.0) -> LemmaReport:
    """``l_mn(z) <= (1/pi) min(1, exp(-(z - s)^2))`` for all ``m, n <= m_max`` on ``[0, 3s]``.

    ``perturb`` scales the evaluated envelope (sensitivity testing only).
    """
    checked = violations = 0
    worst = math.inf
    worst_at = None
    for m in range(m_max + 1):
        for n in range(m_max + 1):
            s = math.sqrt(m + n + 1)
            z = dz * np.arange(int(math.floor(3.0 * s / dz + 1e-9)) + 1)
            slack = envelope_bound(m, n, z) - perturb * wigner_envelope(m, n, z)
            checked += z.size
            violations += int(np.sum(slack < -LEMMA_TOL))
            i = int(np.argmin(slack))
            if slack[i] < worst:
                worst, worst_at = float(slack[i]), (m, n, float(z[i]))
    return LemmaReport("laguerre_envelope", violations == 0, checked, violations, worst, {"worst_at": worst_at})


def tail_sum(C: float, nu: float, z: float, rtol: float = 1e-15) -> float:
    """``sum_{m + n >= z} exp(-C (m + n)^nu) = sum_{t >= z} (t + 1) exp(-C t^nu)``."""
    t0 = int(math.ceil(z))
    total = 0.0
    t = t0
    while True:
        term = (t + 1) * math.exp(-C * t**nu)
        total += term
        if term < rtol * total and t > t0 + 10 and C * nu * t**nu > 2.0:
            return total
        t += 1


def tail_lemma_check(C: float = 1.0, nu: float = 0.5, zs: Sequence[float] = (25, 36, 49)) -> LemmaReport:
    """Finite-sum check of ``sum_{m+n>=z} exp(-C (m+n)^nu) <= (2/(C nu)) z^(2-nu) exp(-C z^nu)``."""
    rows = []
    for z in zs:
        lhs = tail_sum(C, nu, z)
        rhs = 2.0 / (C * nu) * z ** (2.0 - nu) * math.exp(-C * z**nu)
        rows.append({"z": z, "sum": lhs, "bound": rhs, "margin": rhs - lhs})
    worst = min(r["margin"] for r in rows)
    bad = int(sum(r["margin"] < 0 for r in rows))
    return LemmaReport("series_tail", bad == 0, len(rows), bad, worst, {"rows": rows})


def class_series_sum(cls: StateClass, rtol: float = 1e-16) -> float:
    """``sum_{m, n >= 0} exp(-B (m + n)^(r/2))``."""
    if cls.r == 2:
        return 1.0 / (-math.expm1(-cls.B)) ** 2
    return 1.0 + tail_sum(cls.B, cls.r / 2.0, 1.0, rtol)


def decay_amplitude(z, cls: StateClass):
    """``A(z)`` of the Wigner decay bounds."""
    z = np.asarray(z, dtype=float)
    total = class_series_sum(cls)
    B, r = cls.B, cls.r
    if r == 2:
        poly = 2.0 * math.exp(B) / (B * (1.0 + math.sqrt(B)) ** 2) * z**2
    else:
        poly = 4.0 / (B * r) * z ** (4.0 - r)
    return (total + poly) / math.pi


@dataclass
class DecayReport:
    passed: bool
    z: np.ndarray
    wigner_ratio: np.ndarray
    fourier_ratio: np.ndarray
    z0_wigner: Optional[float]
    z0_fourier: Optional[float]
    violations_wigner: List[float]
    violations_fourier: List[float]
    beta: float

    def summary(self) -> dict:
        return {
            "passed": self.passed,
            "beta": self.beta,
            "z0_wigner": self.z0_wigner,
            "z0_fourier": self.z0_fourier,
            "violations_wigner": self.violations_wigner,
            "violations_fourier": self.violations_fourier,
            "max_ratio_beyond_z0_wigner": _max_beyond(self.z, self.wigner_ratio, self.z0_wigner),
            "max_ratio_beyond_z0_fourier": _max_beyond(self.z, self.fourier_ratio, self.z0_fourier),
        }


def _max_beyond(z, ratio, z0):
    if z0 is None:
        return None
    return float(np.max(ratio[z >= z0]))


def _first_hold(z, ratio):
    ok = ratio <= 1.0 + LEMMA_TOL
    if not np.any(ok):
        return None, []
    i0 = int(np.argmax(ok))
    bad = [float(v) for v in z[i0:][~ok[i0:]]]
    return float(z[i0]), bad


def decay_check(
    truth: DensityMatrix,
    cls: StateClass,
    z_min: float = 0.0,
    z_max: float = 12.0,
    dz: float = 0.02,
    n_angles: int = 64,
    perturb: float = 1.0,
) -> DecayReport:
    """Scan ``|W_rho|`` and ``|F[W_rho]|`` against ``A(z) exp(-beta z^r)`` and ``A(z/2) exp(-beta (z/2)^r)``.

    The Fourier side uses the transform divided by ``FOURIER_SCALE`` (the
    normalization the bound is stated in).  ``z0`` is the first scanned radius
    at which the bound holds; any later failure is a violation.
    """
    report = class_check(truth, cls)
    if not report.member:
        raise ValueError(f"state is not in R({cls.B}, {cls.r}): cell {report.worst_cell} exceeds by {-report.margin:.3g}")
    z = np.arange(z_min, z_max + dz / 2, dz)
    theta = np.linspace(0.0, 2.0 * math.pi, n_angles, endpoint=False)
    q = z[:, None] * np.cos(theta)
    p = z[:, None] * np.sin(theta)
    w_abs = perturb * np.max(np.abs(wigner_eval(truth, q, p)), axis=1)
    f_abs = perturb * np.max(np.abs(wigner_ft(truth, q, p)), axis=1) / FOURIER_SCALE
    beta, r = cls.beta, cls.r
    with np.errstate(over="ignore"):
        w_ratio = w_abs / (decay_amplitude(z, cls) * np.exp(-beta * z**r))
        f_ratio = f_abs / (decay_amplitude(z / 2.0, cls) * np.exp(-beta * (z / 2.0) ** r))
    z0w, badw = _first_hold(z, w_ratio)
    z0f, badf = _first_hold(z, f_ratio)
    passed = z0w is not None and z0f is not None and not badw and not badf
    return DecayReport(passed, z, w_ratio, f_ratio, z0w, z0f, badw, badf, beta)


def biorthogonality_check(
    states: Sequence[DensityMatrix], max_level: int = 6, tol: float = 1e-6
) -> LemmaReport:
    """``(1/pi) iint p_rho(x, phi) f_jk(x) exp(i (j - k) phi) = rho_jk`` for all ``j + k <= max_level``."""
    x, wx = gl_panels(-14.0, 14.0, 112, 16)
    max_dim = max(rho.dim for rho in states)
    ph, wp = gl_panels(0.0, math.pi, 4, max(16, max_dim + max_level + 2))
    pairs = table_pairs(max_level + 1)
    F = pattern_eval_many(pairs, Regime(), x)
    worst = 0.0
    worst_at = None
    checked = bad = 0
    for rho in states:
        P = quadrature_density(rho, x[:, None], ph[None, :])
        inner = (F * wx) @ P
        for r_i, (j, k) in enumerate(pairs):
            val = np.sum(inner[r_i] * np.exp(1j * (j - k) * ph) * wp) / math.pi
            for (a, b), est in (((j, k), val), ((k, j), np.conj(val))):
                target = rho.entries[a, b] if max(a, b) < rho.dim else 0.0
                err = abs(est - target)
                checked += 1
                bad += int(err >= tol)
                if err > worst:
                    worst, worst_at = float(err), (rho.label, a, b)
    return LemmaReport("biorthogonality", bad == 0, checked, bad, tol - worst, {"max_error": worst, "worst_at": worst_at})


def isometry_check(states: Sequence[DensityMatrix], tol: float = 1e-4) -> LemmaReport:
    """``iint W_rho^2 = (1/2pi) sum |rho_jk|^2`` by polar quadrature."""
    rows = []
    for rho in states:
        lhs = wigner_tail_l2_sq(rho, 0.0, extent=14.0)
        rhs = hs_norm_sq(rho) / (2.0 * math.pi)
        rows.append({"state": rho.label, "integral": lhs, "target": rhs, "rel_error": abs(lhs - rhs) / rhs})
    worst = max(r["rel_error"] for r in rows)
    bad = int(sum(r["rel_error"] >= tol for r in rows))
    return LemmaReport("isometry", bad == 0, len(rows), bad, tol - worst, {"rows": rows})
