"""Kernel estimator of the Wigner function with disc truncation.

The kernel combines deconvolution of the Gaussian detector noise with the
inverse Radon transform::

    K(u) = (1/4pi) int_{|t| <= 1/h} exp(-i u t) |t| exp(gamma t^2) dt

and the estimate on a node ``z = (q, p)`` is::

    W_hat(z) = (1/n) sum_l K(q cos Phi_l + p sin Phi_l - Y_l / sqrt(eta))

set to zero outside the disc of radius ``s_n``.  With ``Phi`` uniform on
``[0, pi]`` the mean of a single term is the band-limited Wigner function,
so no further ``1/pi`` factor is applied.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import json
import math
import os
from pathlib import Path
from typing import Optional

import numba
import numpy as np

if "NUMBA_THREADING_LAYER" not in os.environ:
    # the TBB layer shipped with some installs is too old; workqueue is always available
    numba.config.THREADING_LAYER = "workqueue"
from scipy.optimize import brentq
from scipy.special import j1

from ._quad import gl_panels, integrate_doubling
from .errors import TuningError
from .forward import NoiseModel
from .sampler import Dataset
from .state import StateClass

KERNEL_RTOL = 1e-10
#: kernel table step as a fraction of h
TABLE_STEP_FRACTION = 1.0 / 40.0
# fast-math without the no-NaN assumption: out-of-table lookups must stay NaN
_FAST = {"reassoc", "contract", "nsz", "arcp"}


@dataclass(frozen=True)
class WignerTuning:
    """Bandwidth ``h`` and truncation radius ``s_n``."""

    h: float
    s_n: float
    residual: float = 0.0
    diagnostics: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not 0 < self.h <= 1:
            raise ValueError(f"bandwidth must lie in (0, 1], got {self.h}")
        if self.s_n < 1:
            raise ValueError(f"truncation radius must be at least 1, got {self.s_n}")

    @classmethod
    def from_h(cls, h: float, **kw) -> "WignerTuning":
        return cls(h, 1.0 / h, **kw)

    def to_dict(self) -> dict:
        return {"h": self.h, "s_n": self.s_n, "residual": self.residual, "diagnostics": self.diagnostics}


# -- kernel ------------------------------------------------------------------------

def kernel_eval(u, h: float, noise: NoiseModel, rtol: float = KERNEL_RTOL):
    """Direct quadrature of ``K_h(u) = (1/2pi) int_0^{1/h} t exp(gamma t^2) cos(u t) dt``."""
    if not h > 0:
        raise ValueError(f"bandwidth must be positive, got {h}")
    u = np.asarray(u, dtype=float)
    flat = np.abs(u.ravel())
    g = noise.gamma
    umax = float(flat.max()) if flat.size else 0.0
    panels = max(4, int(math.ceil((umax + 1.0) / h / 4.0)))

    def integrand(t):
        return np.cos(np.outer(flat, t)) * (t * np.exp(g * t * t))

    vals = integrate_doubling(integrand, 0.0, 1.0 / h, panels=panels, order=16, rtol=rtol) / (2.0 * math.pi)
    out = vals.reshape(u.shape)
    return out if out.ndim else float(out)


def kernel_at_zero(h: float, noise: NoiseModel) -> float:
    """Closed form of ``K_h(0)``."""
    g = noise.gamma
    if g == 0.0:
        return 1.0 / (4.0 * math.pi * h * h)
    return math.expm1(g / (h * h)) / (4.0 * math.pi * g)


def kernel_l2_sq(h: float, noise: NoiseModel) -> float:
    """``int K_h(u)^2 du = (1/4pi) int_0^{1/h} t^2 exp(2 gamma t^2) dt`` (Plancherel)."""
    g = noise.gamma
    t, w = gl_panels(0.0, 1.0 / h, 8, 16)
    return float(np.sum(w * t * t * np.exp(2.0 * g * t * t))) / (4.0 * math.pi)


@dataclass(frozen=True)
class KernelTable:
    """Kernel values on a symmetric uniform grid ``[-half_width, half_width]``."""

    h: float
    eta: float
    half_width: float
    step: float
    values: np.ndarray

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        return _interp(u.ravel(), self.values, self.half_width, self.step).reshape(u.shape)


def build_kernel_table(h: float, noise: NoiseModel, reach: float, step: Optional[float] = None) -> KernelTable:
    """Tabulate the kernel for arguments up to ``|u| <= reach``."""
    step = h * TABLE_STEP_FRACTION if step is None else step
    half = reach + 4.0 * step
    count = int(math.ceil(half / step))
    half = count * step
    u = step * np.arange(-count, count + 1)
    pos = kernel_eval(u[count:], h, noise)
    values = np.concatenate([pos[:0:-1], pos])
    return KernelTable(h, noise.eta, half, step, values)


@numba.njit(cache=True, fastmath=_FAST)
def _interp_one(u, values, half, step):
    pos = (u + half) / step
    i = int(math.floor(pos))
    if i < 1 or i > values.size - 3:
        return math.nan
    t = pos - i
    w0 = -t * (t - 1.0) * (t - 2.0) / 6.0
    w1 = (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0
    w2 = -(t + 1.0) * t * (t - 2.0) / 2.0
    w3 = (t + 1.0) * t * (t - 1.0) / 6.0
    return w0 * values[i - 1] + w1 * values[i] + w2 * values[i + 1] + w3 * values[i + 2]


@numba.njit(cache=True)
def _interp(u, values, half, step):
    out = np.empty(u.size)
    for i in range(u.size):
        out[i] = _interp_one(u[i], values, half, step)
    return out


@numba.njit(parallel=True, cache=True, fastmath=_FAST)
def _accumulate(qs, ps, radius_sq, cos_phi, sin_phi, y, values, half, step):
    nq = qs.size
    npp = ps.size
    out = np.zeros((nq, npp))
    n = y.size
    for idx in numba.prange(nq * npp):
        i = idx // npp
        j = idx % npp
        q = qs[i]
        p = ps[j]
        if q * q + p * p > radius_sq:
            continue
        acc = 0.0
        for l in range(n):
            acc += _interp_one(q * cos_phi[l] + p * sin_phi[l] - y[l], values, half, step)
        out[i, j] = acc / n
    return out


# -- grid estimator -------------------------------------------------------------------

@dataclass
class WignerGrid:
    """Estimated Wigner function on a square grid, zero outside the disc of radius ``s_n``."""

    half_width: float
    step: float
    values: np.ndarray
    tuning: WignerTuning
    eta: float = 1.0
    n: int = 0

    def __post_init__(self):
        if self.half_width < self.tuning.s_n * (1 - 1e-12):
            raise ValueError("grid does not cover the truncation disc")

    @property
    def axis(self) -> np.ndarray:
        m = (self.values.shape[0] - 1) // 2
        return self.step * np.arange(-m, m + 1)

    def mesh(self):
        a = self.axis
        return np.meshgrid(a, a, indexing="ij")

    def disc_mask(self) -> np.ndarray:
        q, p = self.mesh()
        return q * q + p * p <= self.tuning.s_n**2

    def l2_sq(self, other: Optional[np.ndarray] = None) -> float:
        """Midpoint-rule ``||W_hat - other||^2`` over the disc."""
        diff = self.values if other is None else self.values - other
        return float(np.sum(np.where(self.disc_mask(), diff, 0.0) ** 2) * self.step**2)

    def to_csv(self, path) -> Path:
        path = Path(path)
        q, p = self.mesh()
        rows = np.column_stack([q.ravel(), p.ravel(), self.values.ravel()])
        np.savetxt(path, rows, delimiter=",", header="q,p,w", comments="", fmt="%.17g")
        meta = {"h": self.tuning.h, "s_n": self.tuning.s_n, "eta": self.eta, "n": self.n}
        path.with_suffix(".json").write_text(json.dumps(meta, indent=1))
        return path


def grid_axis(half_width: float, step: float) -> np.ndarray:
    m = int(math.ceil(half_width / step - 1e-9))
    return step * np.arange(-m, m + 1)


def estimate_wigner(
    data: Dataset,
    tuning: WignerTuning,
    step: Optional[float] = None,
    half_width: Optional[float] = None,
    threads: int = 1,
    table: Optional[KernelTable] = None,
) -> WignerGrid:
    """Truncated kernel estimate on a grid (defaults: step ``h/2``, half-width ``s_n``)."""
    if data.n == 0:
        raise ValueError("empty dataset")
    step = tuning.h / 2.0 if step is None else step
    half_width = tuning.s_n if half_width is None else half_width
    if half_width < tuning.s_n:
        raise ValueError(f"grid half-width {half_width} smaller than the disc radius {tuning.s_n}")
    noise = data.noise
    y = data.y / math.sqrt(noise.eta)
    reach = tuning.s_n + float(np.max(np.abs(y)))
    if table is None or table.h != tuning.h or table.eta != noise.eta or table.half_width < reach:
        table = build_kernel_table(tuning.h, noise, reach)
    axis = grid_axis(half_width, step)
    prev = numba.get_num_threads()
    numba.set_num_threads(max(1, min(threads, numba.config.NUMBA_NUM_THREADS)))
    try:
        values = _accumulate(
            axis, axis, tuning.s_n**2, np.cos(data.phi), np.sin(data.phi), y, table.values, table.half_width, table.step
        )
    finally:
        numba.set_num_threads(prev)
    return WignerGrid(float(axis[-1]), step, values, tuning, eta=noise.eta, n=data.n)


def estimate_wigner_at(data: Dataset, tuning: WignerTuning, q, p, table: Optional[KernelTable] = None):
    """Truncated estimate at arbitrary points (no grid)."""
    q, p = np.broadcast_arrays(np.asarray(q, dtype=float), np.asarray(p, dtype=float))
    noise = data.noise
    y = data.y / math.sqrt(noise.eta)
    reach = tuning.s_n + float(np.max(np.abs(y)))
    if table is None or table.half_width < reach:
        table = build_kernel_table(tuning.h, noise, reach)
    out = np.zeros(q.shape)
    inside = q * q + p * p <= tuning.s_n**2
    if np.any(inside):
        out[inside] = _accumulate_points(
            q[inside], p[inside], np.cos(data.phi), np.sin(data.phi), y, table.values, table.half_width, table.step
        )
    return out if out.ndim else float(out)


@numba.njit(parallel=True, cache=True)
def _accumulate_points(qs, ps, cos_phi, sin_phi, y, values, half, step):
    out = np.empty(qs.size)
    n = y.size
    for i in numba.prange(qs.size):
        acc = 0.0
        for l in range(n):
            acc += _interp_one(qs[i] * cos_phi[l] + ps[i] * sin_phi[l] - y[l], values, half, step)
        out[i] = acc / n
    return out


# -- Fourier transform of the truncated estimator ----------------------------------------

def disc_ft(k, radius: float):
    """``int_{|z| <= radius} exp(-i k.z) dz = 2 pi radius J1(radius k) / k``."""
    k = np.asarray(k, dtype=float)
    safe = np.where(k == 0, 1.0, k)
    return np.where(k == 0, math.pi * radius**2, 2.0 * math.pi * radius * j1(radius * safe) / safe)


def _ft_sum(y, phi, w1, w2, h, s, g, panels, chunk=4096) -> complex:
    tn, tw = gl_panels(-1.0 / h, 1.0 / h, panels, 16)
    weight = tw * np.abs(tn) * np.exp(g * tn * tn) / (4.0 * math.pi)
    total = 0.0 + 0.0j
    for start in range(0, y.size, chunk):
        c = np.cos(phi[start : start + chunk])[:, None]
        sn = np.sin(phi[start : start + chunk])[:, None]
        k = np.hypot(w1 - tn * c, w2 - tn * sn)
        phase = np.exp(-1j * np.outer(y[start : start + chunk], tn))
        total += np.sum((phase * disc_ft(k, s)) @ weight)
    return total


def estimator_ft(data: Dataset, tuning: WignerTuning, w, panels: Optional[int] = None, rtol: float = 1e-10) -> complex:
    """Exact Fourier transform of the truncated estimate at frequency ``w = (w1, w2)``.

    Each record contributes
    ``(1/4pi) int_{|t|<=1/h} |t| exp(gamma t^2) exp(-i t y) D(|w - t e_phi|) dt``
    with ``D`` the transform of the disc indicator.  Without ``panels`` the
    panel count is doubled on a subsample until stable to ``rtol`` and then
    doubled once more for the full data.
    """
    w1, w2 = map(float, w)
    h, s = tuning.h, tuning.s_n
    g = data.noise.gamma
    y = data.y / math.sqrt(data.eta)
    if panels is None:
        sub = slice(0, min(data.n, 2048))
        panels = 4
        prev = _ft_sum(y[sub], data.phi[sub], w1, w2, h, s, g, panels)
        while True:
            panels *= 2
            cur = _ft_sum(y[sub], data.phi[sub], w1, w2, h, s, g, panels)
            if abs(cur - prev) <= rtol * max(abs(cur), 1e-300) or panels > 4096:
                break
            prev = cur
        panels *= 2
    return _ft_sum(y, data.phi, w1, w2, h, s, g, panels) / data.n


# -- tuning -------------------------------------------------------------------------------

def select_wigner_tuning(n: float, noise: NoiseModel, cls: StateClass) -> WignerTuning:
    """Bandwidth minimizing the L2 risk bound for class ``cls``; ``s_n = 1/h``."""
    if n < 3:
        raise ValueError(f"n must be at least 3 (log log n), got {n}")
    L = math.log(n)
    ll = math.log(L)
    g, beta, r = noise.gamma, cls.beta, cls.r
    if r == 2:
        inv_h_sq = 2.0 / (4.0 * g + beta) * L + ll / (4.0 * g + beta)
        if inv_h_sq < 1.0:
            raise TuningError(f"closed-form bandwidth exceeds 1 for n = {n}")
        return WignerTuning.from_h(inv_h_sq**-0.5, residual=0.0, diagnostics={"rule": "closed form (r = 2)"})
    rhs = L - ll * ll

    def eq(h):
        return 2.0 ** (1.0 - r) * beta / h**r + 2.0 * g / (h * h) - rhs

    if eq(1.0) > 0:
        raise TuningError(
            f"no bandwidth in (0, 1]: equation value {eq(1.0):.4g} > 0 at h = 1 (scanned (0, 1], n = {n})"
        )
    lo = 0.5
    while eq(lo) < 0:
        lo /= 2.0
        if lo < 1e-12:
            raise TuningError("bandwidth bracket collapsed below 1e-12")
    h = brentq(eq, lo, 1.0, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    return WignerTuning.from_h(h, residual=float(eq(h)), diagnostics={"rule": "root (r < 2)"})
