"""Pattern functions f_jk and their noise-compensated variants.

A pattern function is defined through its Fourier transform (convention
``g~(t) = int g(x) exp(-i t x) dx``)::

    f~_jk(t) = pi (-i)^a sgn(t)^a |t| ell_k^a(t^2 / 2),   a = j - k >= 0

where ``ell`` is the normalized Laguerre function from :mod:`qhtomo.specfun`.
Noise compensation multiplies by ``exp(gamma t^2)`` and, for ``eta <= 1/2``,
cuts the spectrum at ``|t| <= 1/delta``.  Values in position space come from
the inverse transform ``f(x) = (1/2pi) int f~(t) exp(i t x) dt``, split at the
kink ``t = 0`` and integrated by composite Gauss-Legendre panels.

Paired with the quadrature density convention of :mod:`qhtomo.forward`,
``E[f_jk(X) exp(i (j - k) Phi)] = rho_jk``; see :data:`ANGLE_SIGN`.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import json
import math
from pathlib import Path
import struct
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.optimize import brentq

from ._quad import gl_panels
from .errors import CapacityError, NumericalError
from .specfun import laguerre_functions

#: an estimate of rho_jk averages f_jk(x) exp(i ANGLE_SIGN (j - k) phi)
ANGLE_SIGN = +1
TAIL_LEVEL = 1e-16
IMAG_TOL = 1e-9
TABLE_VERSION = 1
TABLE_MAGIC = b"QHTPAT\x00\x01"
MAX_TABLE_BYTES = 1 << 30

REGIMES = ("noiseless", "amplified", "cutoff")


@dataclass(frozen=True)
class Regime:
    """Which variant of the pattern functions to use.

    ``noiseless``: ``eta == 1``; ``amplified``: ``1/2 < eta <= 1``;
    ``cutoff``: ``0 < eta <= 1/2`` with spectral cut-off ``delta``.
    """

    kind: str = "noiseless"
    eta: float = 1.0
    delta: Optional[float] = None

    def __post_init__(self):
        if self.kind not in REGIMES:
            raise ValueError(f"unknown regime {self.kind!r}")
        if self.kind == "noiseless" and self.eta != 1.0:
            raise ValueError("noiseless regime requires eta == 1")
        if self.kind == "amplified" and not 0.5 < self.eta <= 1.0:
            raise ValueError(
                f"amplified regime requires 1/2 < eta <= 1 (got {self.eta}); "
                "exp(gamma t^2) is not integrable against the pattern transform otherwise"
            )
        if self.kind == "cutoff":
            if not 0.0 < self.eta <= 0.5:
                raise ValueError(f"cutoff regime requires 0 < eta <= 1/2, got {self.eta}")
            if self.delta is None or not self.delta > 0:
                raise ValueError("cutoff regime requires delta > 0")
        elif self.delta is not None:
            raise ValueError(f"delta is only used by the cutoff regime, not {self.kind!r}")

    @classmethod
    def for_eta(cls, eta: float, delta: Optional[float] = None) -> "Regime":
        if eta == 1.0:
            return cls("noiseless")
        if eta > 0.5:
            return cls("amplified", eta)
        return cls("cutoff", eta, delta)

    @property
    def gamma(self) -> float:
        return (1.0 - self.eta) / (4.0 * self.eta)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "eta": self.eta, "delta": self.delta}


@dataclass(frozen=True)
class PatternSpec:
    j: int
    k: int
    regime: Regime = field(default_factory=Regime)

    def __post_init__(self):
        if self.j < 0 or self.k < 0:
            raise ValueError("pattern indices must be nonnegative")

    @property
    def s(self) -> float:
        return math.sqrt(self.j + self.k + 1)


def pattern_ft(j: int, k: int, t, regime: Optional[Regime] = None):
    """Fourier transform ``f~_{k,j}(t)`` (symmetric in ``j, k``), optionally with noise compensation."""
    if j < k:
        j, k = k, j
    a = j - k
    t = np.asarray(t, dtype=float)
    ell = laguerre_functions(k, a, 0.5 * t * t)[k]
    out = math.pi * (-1j) ** a * np.sign(t) ** a * np.abs(t) * ell
    if regime is not None and regime.kind != "noiseless":
        out = out * np.exp(regime.gamma * t * t)
        if regime.kind == "cutoff":
            out = np.where(np.abs(t) <= 1.0 / regime.delta, out, 0.0)
    out = np.asarray(out)
    return out if out.ndim else complex(out)


def spectral_extent(j: int, k: int, regime: Regime) -> float:
    """Frequency beyond which the (compensated) transform is negligible."""
    if regime.kind == "cutoff":
        return 1.0 / regime.delta
    s = math.sqrt(j + k + 1)
    g = regime.gamma
    # |f~(t)| <= pi t exp(g t^2 - (t/2 - s)^2) for t >= 2s
    peak = math.log(2.0 * s) + 4.0 * g * s * s
    level = math.log(TAIL_LEVEL) + max(0.0, peak)

    def excess(t):
        return math.log(t) + g * t * t - (0.5 * t - s) ** 2 - level

    hi = 2.0 * s + 8.0
    while excess(hi) > 0:
        hi *= 2.0
    return brentq(excess, 2.0 * s, hi, xtol=1e-8)


def _initial_panels(extent: float, xmax: float, s: float) -> int:
    return max(4, int(math.ceil(extent * (xmax + 2.0 * s + 2.0) / 6.0)))


def _inverse_ft(pairs, regime, x, extent, panels, order=16, chunk=1024):
    """Inverse transforms of several pattern functions on a shared node set.

    Returns complex values of shape ``(len(pairs), x.size)``.
    """
    tn, tw = gl_panels(0.0, extent, panels, order)
    # the two halves of the real line are integrated separately
    t = np.concatenate([-tn[::-1], tn])
    w = np.concatenate([tw[::-1], tw])
    g = np.stack([pattern_ft(j, k, t, regime) for j, k in pairs], axis=1) * (w / (2.0 * math.pi))[:, None]
    flat = x.ravel()
    out = np.empty((len(pairs), flat.size), dtype=complex)
    for start in range(0, flat.size, chunk):
        xs = flat[start : start + chunk]
        out[:, start : start + chunk] = (np.exp(1j * np.outer(xs, t)) @ g).T
    return out


def _converged_inverse_ft(pairs, regime, x, rtol=1e-10):
    x = np.asarray(x, dtype=float)
    xmax = float(np.max(np.abs(x))) if x.size else 0.0
    extent = max(spectral_extent(j, k, regime) for j, k in pairs)
    s = math.sqrt(max(j + k for j, k in pairs) + 1)
    panels = _initial_panels(extent, xmax, s)
    prev = _inverse_ft(pairs, regime, x, extent, panels)
    while True:
        panels *= 2
        cur = _inverse_ft(pairs, regime, x, extent, panels)
        if not cur.size:
            return cur
        scale = np.maximum(1.0, np.max(np.abs(cur), axis=1))
        if np.all(np.max(np.abs(cur - prev), axis=1) <= rtol * scale):
            return cur
        if panels > 1 << 16:
            raise NumericalError(f"inverse transform of pattern functions {pairs} did not converge")
        prev = cur


def _real_part(vals, pairs):
    if vals.size:
        resid = np.max(np.abs(vals.imag), axis=1)
        scale = np.maximum(1.0, np.max(np.abs(vals.real), axis=1))
        bad = np.flatnonzero(resid > IMAG_TOL * scale)
        if bad.size:
            j, k = pairs[bad[0]]
            raise NumericalError(f"pattern function f_{j},{k} has imaginary residual {resid[bad[0]]:.3g}")
    return vals.real


def pattern_eval(spec: PatternSpec, x, rtol: float = 1e-10):
    """Pattern function ``f_{j,k}`` in the requested regime at points ``x``."""
    x = np.asarray(x, dtype=float)
    pair = [(spec.j, spec.k)]
    out = _real_part(_converged_inverse_ft(pair, spec.regime, x, rtol), pair)[0].reshape(x.shape)
    return out if out.ndim else float(out)


def pattern_eval_many(pairs, regime: Regime, x, rtol: float = 1e-10) -> np.ndarray:
    """Several pattern functions at once; shape ``(len(pairs), x.size)``."""
    x = np.asarray(x, dtype=float).ravel()
    pairs = list(pairs)
    return _real_part(_converged_inverse_ft(pairs, regime, x, rtol), pairs)


# -- tabulation --------------------------------------------------------------

def table_pairs(N: int) -> List[Tuple[int, int]]:
    """Index pairs ``(j, k)`` with ``j >= k`` and ``j + k < N``."""
    return [(j, k) for j in range(N) for k in range(j + 1) if j + k < N]


def default_grid(N: int, regime: Regime) -> Tuple[float, float]:
    """``(half_width, step)`` for a table covering all ``j + k < N``."""
    s_max = math.sqrt(max(N, 1))
    half = 12.0 + s_max
    extent = max(spectral_extent(j, k, regime) for j, k in table_pairs(max(N, 1)))
    step = min(math.pi / (4.0 * extent), 0.1 / extent)
    return half, step


def _cubic_weights(u):
    return (
        -u * (u - 1.0) * (u - 2.0) / 6.0,
        (u + 1.0) * (u - 1.0) * (u - 2.0) / 2.0,
        -(u + 1.0) * u * (u - 2.0) / 2.0,
        (u + 1.0) * u * (u - 1.0) / 6.0,
    )


@dataclass
class PatternTable:
    """Pattern functions for all ``j + k < N`` on a uniform grid.

    Lookups use local four-point (cubic) interpolation; points within two grid
    steps of the edge or outside the grid fall back to direct evaluation.
    """

    N: int
    regime: Regime
    half_width: float
    step: float
    values: np.ndarray
    pairs: List[Tuple[int, int]]
    _index: Dict[Tuple[int, int], int] = field(init=False, repr=False)

    def __post_init__(self):
        self._index = {p: i for i, p in enumerate(self.pairs)}

    @property
    def x_grid(self) -> np.ndarray:
        return -self.half_width + self.step * np.arange(self.values.shape[1])

    def row(self, j: int, k: int) -> int:
        key = (j, k) if j >= k else (k, j)
        if key not in self._index:
            raise KeyError(f"pattern ({j}, {k}) not tabulated (N = {self.N})")
        return self._index[key]

    def _locate(self, x):
        pos = (x + self.half_width) / self.step
        # snap to nodes so that lookups there return the stored value exactly
        near = np.rint(pos)
        pos = np.where(np.abs(pos - near) < 1e-9, near, pos)
        i = np.floor(pos).astype(np.int64)
        u = pos - i
        inside = (i >= 1) & (i <= self.values.shape[1] - 3)
        return i, u, inside

    def lookup_rows(self, rows, x) -> np.ndarray:
        """Values of the tabulated functions ``rows`` at ``x``; shape ``(len(rows), len(x))``."""
        x = np.asarray(x, dtype=float).ravel()
        rows = np.asarray(rows, dtype=np.int64)
        i, u, inside = self._locate(x)
        out = np.empty((rows.size, x.size))
        ii, uu = i[inside], u[inside]
        block = self.values[rows]
        acc = np.zeros((rows.size, ii.size))
        for off, w in zip((-1, 0, 1, 2), _cubic_weights(uu)):
            acc += block[:, ii + off] * w
        out[:, inside] = acc
        if not np.all(inside):
            out[:, ~inside] = pattern_eval_many([self.pairs[r] for r in rows], self.regime, x[~inside])
        return out

    def lookup(self, j: int, k: int, x):
        x = np.asarray(x, dtype=float)
        vals = self.lookup_rows([self.row(j, k)], x.ravel())[0].reshape(x.shape)
        return vals if vals.ndim else float(vals)


def build_table(
    N: int,
    regime: Optional[Regime] = None,
    half_width: Optional[float] = None,
    step: Optional[float] = None,
) -> PatternTable:
    """Tabulate every pattern function with ``j + k < N``."""
    if N < 1:
        raise ValueError(f"N must be positive, got {N}")
    regime = regime or Regime()
    pairs = table_pairs(N)
    d_half, d_step = default_grid(N, regime)
    half_width = d_half if half_width is None else half_width
    step = d_step if step is None else step
    extent = max(spectral_extent(j, k, regime) for j, k in pairs)
    if step > math.pi / (4.0 * extent) * (1 + 1e-12):
        raise ValueError(f"grid step {step} violates the sampling bound pi/(4 * {extent:.4g})")
    n_grid = int(math.floor(2.0 * half_width / step)) + 1
    if len(pairs) * n_grid * 8 > MAX_TABLE_BYTES:
        raise CapacityError(f"pattern table with {len(pairs)} x {n_grid} entries exceeds the memory guard")
    x = -half_width + step * np.arange(n_grid)
    values = pattern_eval_many(pairs, regime, x)
    return PatternTable(N, regime, half_width, step, values, pairs)


def save_table(table: PatternTable, path) -> None:
    """Write a versioned little-endian binary cache of a table."""
    header = json.dumps(
        {
            "version": TABLE_VERSION,
            "N": table.N,
            "regime": table.regime.to_dict(),
            "half_width": table.half_width,
            "step": table.step,
            "shape": list(table.values.shape),
        },
        sort_keys=True,
    ).encode()
    with open(path, "wb") as fh:
        fh.write(TABLE_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(np.ascontiguousarray(table.values, dtype="<f8").tobytes())


def load_table(path, N: int, regime: Regime, half_width=None, step=None) -> Optional[PatternTable]:
    """Read a cached table; ``None`` when absent or built with other parameters."""
    path = Path(path)
    if not path.exists():
        return None
    with open(path, "rb") as fh:
        if fh.read(len(TABLE_MAGIC)) != TABLE_MAGIC:
            return None
        (size,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(size))
        d_half, d_step = default_grid(N, regime)
        expect = {
            "version": TABLE_VERSION,
            "N": N,
            "regime": regime.to_dict(),
            "half_width": d_half if half_width is None else half_width,
            "step": d_step if step is None else step,
        }
        if any(header.get(key) != val for key, val in expect.items()):
            return None
        shape = tuple(header["shape"])
        values = np.frombuffer(fh.read(), dtype="<f8").astype(float).reshape(shape)
    return PatternTable(N, regime, header["half_width"], header["step"], values, table_pairs(N))


def cached_table(path, N: int, regime: Regime) -> PatternTable:
    table = load_table(path, N, regime)
    if table is None:
        table = build_table(N, regime)
        save_table(table, path)
    return table


# -- norm growth ---------------------------------------------------------------

@dataclass
class NormGrowthRow:
    N: int
    sum_l2_sq: float
    sum_sup_sq: Optional[float]


def pattern_l2_sq(j: int, k: int, regime: Regime, rtol: float = 1e-10) -> float:
    """``||f_jk||_2^2`` via Plancherel: ``pi int_0^T t^2 ell^2 exp(2 gamma t^2) dt``."""
    return float(_l2_by_level(j + k, regime, rtol, only=(max(j, k), min(j, k)))[0])


def _l2_by_level(level: int, regime: Regime, rtol: float, only=None) -> np.ndarray:
    """Squared L2 norms of all ``f_jk`` with ``j + k = level`` and ``j >= k``, ordered by ``k``."""
    ks = range(level // 2 + 1) if only is None else [only[1]]
    out = []
    g = regime.gamma if regime.kind != "noiseless" else 0.0
    for k in ks:
        j = level - k
        a = j - k
        extent = spectral_extent(j, k, regime)
        panels = max(4, int(math.ceil(extent)))
        prev = None
        while True:
            t, w = gl_panels(0.0, extent, panels, 16)
            ell = laguerre_functions(k, a, 0.5 * t * t)[k]
            val = math.pi * np.sum(w * t * t * ell * ell * np.exp(2.0 * g * t * t))
            if prev is not None and abs(val - prev) <= rtol * abs(val):
                break
            prev, panels = val, panels * 2
        out.append(val)
    return np.array(out)


def norm_growth_report(
    N_max: int, regime: Optional[Regime] = None, with_sup: bool = False, N_min: int = 0
) -> List[NormGrowthRow]:
    """Cumulative sums over ``j + k <= N`` of ``||f_jk||_2^2`` (and optionally ``||f_jk||_inf^2``).

    Both index orders are counted, so off-diagonal pairs contribute twice.
    """
    regime = regime or Regime()
    if regime.kind == "cutoff":
        raise ValueError("norm growth is reported for the noiseless and amplified regimes only")
    rows = []
    total_l2 = 0.0
    total_sup = 0.0
    for level in range(N_max + 1):
        l2 = _l2_by_level(level, regime, 1e-10)
        mult = np.array([1.0 if level - k == k else 2.0 for k in range(level // 2 + 1)])
        total_l2 += float(np.sum(mult * l2))
        if with_sup:
            pairs = [(level - k, k) for k in range(level // 2 + 1)]
            ext = max(spectral_extent(j, k, regime) for j, k in pairs)
            half = 12.0 + math.sqrt(level + 1)
            dx = math.pi / (8.0 * ext)
            xs = dx * np.arange(-math.ceil(half / dx), math.ceil(half / dx) + 1)
            sups = np.max(np.abs(pattern_eval_many(pairs, regime, xs)), axis=1) ** 2
            total_sup += float(np.sum(mult * sups))
        if level >= N_min:
            rows.append(NormGrowthRow(level, total_l2, total_sup if with_sup else None))
    return rows
